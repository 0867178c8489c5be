import math

import numpy as np
import pytest

from rgdkit.errors import ConfigError, DimensionError
from rgdkit.models import (
    LossKind,
    MlpModel,
    TheoryModel,
    batch_loss_and_input_grads,
    batch_losses,
    batch_mean_loss,
    cross_entropy,
    forward_mlp,
    forward_theory,
    grad_input,
    grad_params,
    hidden_preactivations,
    loss_theory,
    predict_labels,
)
from rgdkit.tensor import identity, tensor, zeros


def canonical_theory():
    # one hidden unit, all weights 1: f(x) = relu(x)
    return TheoryModel(tensor([1.0]), tensor([[1.0]]))


def test_forward_theory_by_hand():
    m = canonical_theory()
    assert forward_theory(m, [0.5]) == 0.5
    assert forward_theory(m, [-0.5]) == 0.0  # dead ReLU


def test_forward_theory_matches_loop_oracle():
    rng = np.random.default_rng(11)
    for _ in range(25):
        h, n = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        m = TheoryModel.random(h, n, int(rng.integers(0, 1000)))
        x = rng.uniform(-1.0, 1.0, n)
        acc = 0.0
        for j in range(h):
            z = 0.0
            for k in range(n):
                z += m.w2.array[j, k] * x[k]
            acc += m.w1.array[j] * max(z, 0.0)
        assert forward_theory(m, x) == acc


def test_loss_theory_values():
    m = canonical_theory()
    assert loss_theory(m, [0.5], 0.5) == 0.0
    assert loss_theory(m, [0.6], 0.0) == 0.18
    r = forward_theory(m, [0.3]) - 1.2
    assert loss_theory(m, [0.3], 1.2) == 0.5 * r * r


def test_grad_input_theory_by_hand():
    m = canonical_theory()
    g = grad_input(m, [0.5], 0.0, LossKind.MSE_THEORY)
    assert g.tolist() == [0.5]
    # gradient vanishes on the dead side of the ReLU
    g = grad_input(m, [-0.5], 0.0, LossKind.MSE_THEORY)
    assert g.tolist() == [0.0]


def test_grad_input_matches_finite_differences():
    rng = np.random.default_rng(21)
    h = 1e-6
    checked = 0
    for i in range(30):
        m = MlpModel.random((3, 8, 2), int(rng.integers(0, 10**6)))
        x = rng.uniform(-1.0, 1.0, 3)
        if min(np.min(np.abs(p)) for p in hidden_preactivations(m, x)) < 1e-3:
            continue  # too close to a ReLU kink for finite differences
        label = int(rng.integers(0, 2))
        g = grad_input(m, x, label, LossKind.CROSS_ENTROPY).array
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (
                batch_losses(m, (x + e)[None, :], [label], LossKind.CROSS_ENTROPY)[0]
                - batch_losses(m, (x - e)[None, :], [label], LossKind.CROSS_ENTROPY)[0]
            ) / (2 * h)
            assert abs(g[k] - fd) < 1e-4 * max(1.0, abs(g[k]))
        checked += 1
    assert checked >= 20


def test_forward_mlp_identity_layer():
    m = MlpModel(((identity(3), zeros((3,))),))
    x = np.array([0.25, -1.5, 3.0])
    assert np.array_equal(forward_mlp(m, x).array, x)


def test_forward_mlp_matches_loop_oracle():
    rng = np.random.default_rng(31)
    m = MlpModel.random((2, 3, 2), 5)
    x = rng.uniform(-1.0, 1.0, 2)
    (w0, b0), (w1, b1) = m.layers
    hidden = []
    for j in range(3):
        a = b0.array[j]
        for k in range(2):
            a += w0.array[j, k] * x[k]
        hidden.append(max(a, 0.0))
    logits = []
    for j in range(2):
        a = b1.array[j]
        for k in range(3):
            a += w1.array[j, k] * hidden[k]
        logits.append(a)
    assert forward_mlp(m, x).tolist() == logits


def test_from_theory_agrees_with_theory_forward():
    rng = np.random.default_rng(41)
    for _ in range(20):
        tm = TheoryModel.random(int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(0, 100)))
        mlp = MlpModel.from_theory(tm)
        x = rng.uniform(-1.0, 1.0, tm.input_dim)
        assert forward_mlp(mlp, x).item() == forward_theory(tm, x)
        y = float(rng.uniform(-2.0, 2.0))
        got = batch_losses(mlp, x[None, :], [y], LossKind.MSE_THEORY)[0]
        assert got == loss_theory(tm, x, y)


def test_cross_entropy_uniform_logits():
    for c in (2, 3, 5, 10):
        assert abs(cross_entropy(np.zeros(c), 0) - math.log(c)) < 1e-12
        assert abs(cross_entropy(np.full(c, 3.7), c - 1) - math.log(c)) < 1e-12


def test_cross_entropy_extreme_logits_stable():
    assert cross_entropy(np.array([1000.0, 0.0]), 0) == 0.0
    assert cross_entropy(np.array([1000.0, 0.0]), 1) == 1000.0
    assert math.isfinite(cross_entropy(np.array([-1000.0, 1000.0, 0.0]), 2))


def test_cross_entropy_label_range():
    with pytest.raises(ConfigError):
        cross_entropy(np.zeros(3), 3)
    with pytest.raises(ConfigError):
        cross_entropy(np.zeros(3), -1)


def test_loss_pairing_rules():
    mlp2 = MlpModel.random((3, 4, 2), 0)
    mlp1 = MlpModel.random((3, 4, 1), 0)
    tm = TheoryModel.random(2, 3, 0)
    with pytest.raises(ConfigError):
        batch_losses(tm, np.zeros((1, 3)), [0], LossKind.CROSS_ENTROPY)
    with pytest.raises(ConfigError):
        batch_losses(mlp1, np.zeros((1, 3)), [0], LossKind.CROSS_ENTROPY)
    with pytest.raises(ConfigError):
        batch_losses(mlp2, np.zeros((1, 3)), [0.0], LossKind.MSE_THEORY)
    # valid pairings raise nothing
    batch_losses(mlp2, np.zeros((1, 3)), [0], LossKind.CROSS_ENTROPY)
    batch_losses(mlp1, np.zeros((1, 3)), [0.0], LossKind.MSE_THEORY)
    batch_losses(tm, np.zeros((1, 3)), [0.0], LossKind.MSE_THEORY)


def test_predict_labels_tie_breaks_to_first():
    m = MlpModel(((zeros((3, 2)), zeros((3,))),))
    assert predict_labels(m, np.array([0.4, 0.6])).tolist() == [0]
    batch = np.zeros((4, 2))
    assert predict_labels(m, batch).tolist() == [0, 0, 0, 0]


def test_batch_grads_match_single_sample_bitwise():
    rng = np.random.default_rng(51)
    m = MlpModel.random((4, 16, 16, 3), 9)
    xs = rng.uniform(-1.0, 1.0, (8, 4))
    labels = rng.integers(0, 3, 8)
    losses, grads = batch_loss_and_input_grads(m, xs, labels, LossKind.CROSS_ENTROPY)
    for i in range(8):
        li, gi = batch_loss_and_input_grads(m, xs[i : i + 1], labels[i : i + 1], LossKind.CROSS_ENTROPY)
        assert losses[i] == li[0]
        assert np.array_equal(grads[i], gi[0])


def test_batch_mean_loss_is_sequential_fold():
    rng = np.random.default_rng(61)
    m = MlpModel.random((3, 8, 2), 2)
    xs = rng.uniform(-1.0, 1.0, (7, 3))
    labels = rng.integers(0, 2, 7)
    per = batch_losses(m, xs, labels, LossKind.CROSS_ENTROPY)
    acc = 0.0
    for v in per:
        acc += v
    assert batch_mean_loss(m, xs, labels, LossKind.CROSS_ENTROPY) == acc / 7


def test_batch_losses_validation():
    m = MlpModel.random((3, 4, 2), 0)
    with pytest.raises(ConfigError):
        batch_losses(m, np.zeros((0, 3)), [], LossKind.CROSS_ENTROPY)
    with pytest.raises(DimensionError):
        batch_losses(m, np.zeros(3), [0], LossKind.CROSS_ENTROPY)
    with pytest.raises(ConfigError):
        batch_losses(m, np.zeros((1, 3)), [5], LossKind.CROSS_ENTROPY)


def test_grad_params_closed_form_single_layer():
    # linear scalar model, squared error: dL/dw = residual * x, dL/db = residual
    w = tensor([[0.7, -0.2, 0.4]])
    b = tensor([0.1])
    m = MlpModel(((w, b),))
    x = np.array([[0.5, -1.0, 2.0]])
    y = [0.3]
    pred = forward_mlp(m, x[0]).item()
    r = pred - y[0]
    (dw, db), = grad_params(m, (x, y), LossKind.MSE_THEORY)
    assert np.array_equal(dw.array, r * x)
    assert db.tolist() == [r]


def test_grad_params_duplicated_sample_invariance():
    m = MlpModel.random((3, 8, 2), 4)
    x = np.random.default_rng(71).uniform(-1.0, 1.0, (1, 3))
    y = np.array([1])
    once = grad_params(m, (x, y), LossKind.CROSS_ENTROPY)
    twice = grad_params(m, (np.vstack([x, x]), np.concatenate([y, y])), LossKind.CROSS_ENTROPY)
    for (dw1, db1), (dw2, db2) in zip(once, twice):
        assert dw1 == dw2
        assert db1 == db2


def test_grad_params_matches_finite_differences():
    rng = np.random.default_rng(81)
    h = 1e-5
    m = MlpModel.random((3, 6, 2), 13)
    xs = rng.uniform(-1.0, 1.0, (4, 3))
    labels = rng.integers(0, 2, 4)
    grads = grad_params(m, (xs, labels), LossKind.CROSS_ENTROPY)
    for li, (dw, _) in enumerate(grads):
        w = m.layers[li][0].array
        for _ in range(5):
            i, j = int(rng.integers(w.shape[0])), int(rng.integers(w.shape[1]))
            def perturbed(delta):
                layers = list(m.layers)
                wp = w.copy()
                wp[i, j] += delta
                layers[li] = (tensor(wp), m.layers[li][1])
                return MlpModel(tuple(layers))
            fd = (
                batch_mean_loss(perturbed(h), xs, labels, LossKind.CROSS_ENTROPY)
                - batch_mean_loss(perturbed(-h), xs, labels, LossKind.CROSS_ENTROPY)
            ) / (2 * h)
            assert abs(dw.array[i, j] - fd) < 1e-4 * max(1.0, abs(fd))


def test_grad_params_validation():
    m = MlpModel.random((3, 4, 2), 0)
    tm = TheoryModel.random(2, 3, 0)
    with pytest.raises(ConfigError):
        grad_params(tm, (np.zeros((1, 3)), [0.0]), LossKind.MSE_THEORY)
    with pytest.raises(DimensionError):
        grad_params(m, (np.zeros((1, 4)), [0]), LossKind.CROSS_ENTROPY)
    with pytest.raises(ConfigError):
        grad_params(m, (np.zeros((0, 3)), []), LossKind.CROSS_ENTROPY)


def test_hidden_preactivations_shapes():
    m = MlpModel.random((3, 5, 4, 2), 0)
    pre = hidden_preactivations(m, np.zeros(3))
    assert [p.shape for p in pre] == [(5,), (4,)]
    tm = TheoryModel.random(6, 3, 0)
    pre = hidden_preactivations(tm, np.zeros(3))
    assert [p.shape for p in pre] == [(6,)]


def test_random_model_shapes():
    m = MlpModel.random((4, 7, 3), 0)
    assert [(w.shape, b.shape) for w, b in m.layers] == [((7, 4), (7,)), ((3, 7), (3,))]
    assert all(not b.array.any() for _, b in m.layers)
    tm = TheoryModel.random(5, 4, 0)
    assert tm.w1.shape == (5,) and tm.w2.shape == (5, 4)
    # same seed reproduces, different seed does not
    assert MlpModel.random((4, 7, 3), 0) == m
    assert MlpModel.random((4, 7, 3), 1) != m
