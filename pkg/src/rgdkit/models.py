"""Model evaluation, losses, and exact input/parameter gradients.

Two model families are supported.  ``TheoryModel`` is the one-hidden-layer
ReLU regressor ``f(x) = w1 . relu(w2 @ x)`` with no biases and a scalar head,
paired with the squared-error loss ``0.5 * (f(x) - y_star)**2``; it is the
model the step-gain bound checks operate on.  ``MlpModel`` is a bias-carrying
ReLU multilayer perceptron with a linear logit head used for classification
experiments, paired with cross-entropy.

All gradients are hand-written reverse mode, not numerical.  The ReLU
subgradient at exactly zero is taken to be zero, which also keeps the
behaviour consistent with ``sign(0) == 0`` in the update rules.  Every matrix
contraction goes through the deterministic left-to-right fold in
:mod:`rgdkit.tensor`, so forward and backward passes are bitwise reproducible
and batch evaluation agrees bitwise with sample-at-a-time evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, serial_matmul, serial_row_sums, tensor

__all__ = [
    "LossKind",
    "TheoryModel",
    "MlpModel",
    "forward_theory",
    "loss_theory",
    "forward_mlp",
    "grad_input",
    "grad_params",
    "cross_entropy",
    "batch_losses",
    "batch_mean_loss",
    "loss_and_grad_input",
    "predict_labels",
]


class LossKind(Enum):
    CROSS_ENTROPY = "cross_entropy"
    MSE_THEORY = "mse_theory"


@dataclass(frozen=True)
class TheoryModel:
    """One-hidden-layer ReLU regressor: scalar output, no biases.

    ``w1`` has shape (m,), ``w2`` shape (m, n); the model maps an input of
    dimension n to ``w1 . relu(w2 @ x)``.
    """

    w1: Tensor
    w2: Tensor

    def __post_init__(self):
        w1 = tensor(self.w1)
        w2 = tensor(self.w2)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)
        if w1.ndim != 1 or w2.ndim != 2:
            raise DimensionError(f"expected w1 (m,) and w2 (m,n), got {w1.shape} and {w2.shape}")
        if w2.shape[0] != w1.shape[0]:
            raise DimensionError(f"hidden sizes disagree: w1 {w1.shape}, w2 {w2.shape}")
        if w1.shape[0] < 1 or w2.shape[1] < 1:
            raise DimensionError("model dimensions must be at least 1")

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w2.shape[1]

    @staticmethod
    def random(hidden_dim: int, input_dim: int, seed) -> "TheoryModel":
        rng = np.random.default_rng(seed)
        return TheoryModel(
            w1=tensor(rng.standard_normal(hidden_dim)),
            w2=tensor(rng.standard_normal((hidden_dim, input_dim))),
        )


@dataclass(frozen=True)
class MlpModel:
    """ReLU MLP with biases and a linear logit head.

    ``layers`` is an ordered tuple of (weight, bias) pairs; weight shapes are
    (out, in) and consecutive layers must chain.  The last layer produces the
    logits with no activation.
    """

    layers: tuple[tuple[Tensor, Tensor], ...]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise DimensionError("an MLP needs at least one layer")
        norm = []
        prev_out = None
        for i, (w, b) in enumerate(self.layers):
            w, b = tensor(w), tensor(b)
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise DimensionError(f"layer {i}: weight {w.shape} and bias {b.shape} do not conform")
            if prev_out is not None and w.shape[1] != prev_out:
                raise DimensionError(f"layer {i}: input dim {w.shape[1]} != previous output {prev_out}")
            prev_out = w.shape[0]
            norm.append((w, b))
        object.__setattr__(self, "layers", tuple(norm))

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @staticmethod
    def random(dims: Sequence[int], seed) -> "MlpModel":
        """He-initialized MLP with layer sizes ``dims[0] -> ... -> dims[-1]``."""
        if len(dims) < 2:
            raise DimensionError("need at least an input and an output dimension")
        rng = np.random.default_rng(seed)
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
            layers.append((tensor(w), tensor(np.zeros(fan_out))))
        return MlpModel(layers=tuple(layers))

    @staticmethod
    def from_theory(model: TheoryModel) -> "MlpModel":
        """The structurally equal 2-layer MLP (zero biases, scalar head)."""
        m = model.hidden_dim
        return MlpModel(
            layers=(
                (model.w2, tensor(np.zeros(m))),
                (tensor(model.w1.array[None, :]), tensor(np.zeros(1))),
            )
        )


# ---------------------------------------------------------------------------
# forward evaluation


def _as_batch(x, dim: int, what: str) -> tuple[np.ndarray, bool]:
    a = x.array if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise DimensionError(f"{what}: expected input dim {dim}, got shape {tuple(np.shape(x))}")
    return a, single


def theory_forward_batch(model: TheoryModel, xs: np.ndarray) -> np.ndarray:
    """f for each row of ``xs``; exact batch/single bitwise agreement."""
    z = serial_matmul(xs, model.w2.array.T)
    h = np.maximum(z, 0.0)
    return serial_row_sums(h * model.w1.array[None, :])

def forward_theory(model: TheoryModel, x) -> float:
    """Scalar model output ``w1 . relu(w2 @ x)``."""
    xs, _ = _as_batch(x, model.input_dim, "forward_theory")
    if xs.shape[0] != 1:
        raise DimensionError("forward_theory takes a single input vector")
    return float(theory_forward_batch(model, xs)[0])


def loss_theory(model: TheoryModel, x, y_star: float) -> float:
    """Squared-error attack objective ``0.5 * (f(x) - y_star)**2``."""
    r = forward_theory(model, x) - float(y_star)
    return 0.5 * r * r


def _mlp_forward_cached(model: MlpModel, xs: np.ndarray):
    """Returns (logits, per-layer inputs, per-layer ReLU masks)."""
    inputs = [xs]
    masks = []
    z = xs
    last = len(model.layers) - 1
    for i, (w, b) in enumerate(model.layers):
        a = serial_matmul(z, w.array.T) + b.array[None, :]
        if i < last:
            masks.append(a > 0.0)
            z = np.maximum(a, 0.0)
            inputs.append(z)
        else:
            z = a
    return z, inputs, masks


def forward_mlp(model: MlpModel, x) -> Tensor:
    """Logits for a single input (n,) or a batch (N, n)."""
    xs, single = _as_batch(x, model.input_dim, "forward_mlp")
    logits, _, _ = _mlp_forward_cached(model, xs)
    return tensor(logits[0] if single else logits)


def predict_labels(model: MlpModel, x) -> np.ndarray:
    """Argmax class per sample (first index wins ties)."""
    xs, single = _as_batch(x, model.input_dim, "predict_labels")
    logits, _, _ = _mlp_forward_cached(model, xs)
    labels = np.argmax(logits, axis=1)
    return labels if not single else labels[:1]


# ---------------------------------------------------------------------------
# losses


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shift = logits - np.max(logits, axis=1, keepdims=True)
    lse = np.log(serial_row_sums(np.exp(shift)))
    return shift - lse[:, None]


def cross_entropy(logits, label) -> float:
    """Stable negative log-likelihood of ``label`` under softmax logits."""
    a = logits.array if isinstance(logits, Tensor) else np.asarray(logits, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    label = int(label)
    if not 0 <= label < a.shape[1]:
        raise ConfigError(f"label {label} outside [0, {a.shape[1]})")
    return float(-_log_softmax(a)[0, label])


def _check_pairing(model, loss: LossKind):
    if loss is LossKind.CROSS_ENTROPY:
        if not isinstance(model, MlpModel) or model.output_dim < 2:
            raise ConfigError("cross-entropy needs an MLP with at least 2 logits")
    elif loss is LossKind.MSE_THEORY:
        if isinstance(model, MlpModel) and model.output_dim != 1:
            raise ConfigError("squared-error loss needs a scalar-output model")
        if not isinstance(model, (MlpModel, TheoryModel)):
            raise ConfigError(f"unsupported model type {type(model).__name__}")
    else:
        raise ConfigError(f"unknown loss kind {loss!r}")


# ---------------------------------------------------------------------------
# gradients


def batch_loss_and_input_grads(model, xs: np.ndarray, targets, loss: LossKind):
    """Per-sample losses and per-sample input gradients, both batched.

    ``xs`` is (N, n).  For cross-entropy ``targets`` is an int array (N,);
    for squared error it is a float array (N,).  Returns ``(losses (N,),
    grads (N, n))``.  Rows are computed independently, so the result is
    bitwise identical to evaluating one sample at a time.
    """
    _check_pairing(model, loss)
    if isinstance(model, TheoryModel):
        y = np.asarray(targets, dtype=np.float64).reshape(-1)
        z = serial_matmul(xs, model.w2.array.T)
        mask = z > 0.0
        f = serial_row_sums(np.maximum(z, 0.0) * model.w1.array[None, :])
        r = f - y
        losses = 0.5 * r * r
        grads = r[:, None] * serial_matmul(mask * model.w1.array[None, :], model.w2.array)
        return losses, grads

    logits, inputs, masks = _mlp_forward_cached(model, xs)
    if loss is LossKind.CROSS_ENTROPY:
        labels = np.asarray(targets).reshape(-1).astype(np.int64)
        if np.any(labels < 0) or np.any(labels >= model.output_dim):
            raise ConfigError("labels outside the logit range")
        logp = _log_softmax(logits)
        losses = -logp[np.arange(xs.shape[0]), labels]
        delta = np.exp(logp)
        delta[np.arange(xs.shape[0]), labels] -= 1.0
    else:
        y = np.asarray(targets, dtype=np.float64).reshape(-1)
        r = logits[:, 0] - y
        losses = 0.5 * r * r
        delta = r[:, None]
    for i in range(len(model.layers) - 1, 0, -1):
        delta = serial_matmul(delta, model.layers[i][0].array) * masks[i - 1]
    grads = serial_matmul(delta, model.layers[0][0].array)
    return losses, grads


def batch_losses(model, xs, targets, loss: LossKind) -> np.ndarray:
    """Per-sample losses over a batch; forward pass only."""
    _check_pairing(model, loss)
    a = xs.array if isinstance(xs, Tensor) else np.asarray(xs, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"batch inputs must be 2-d, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ConfigError("empty batch")
    if isinstance(model, TheoryModel):
        y = np.asarray(targets, dtype=np.float64).reshape(-1)
        r = theory_forward_batch(model, a) - y
        return 0.5 * r * r
    logits, _, _ = _mlp_forward_cached(model, a)
    if loss is LossKind.CROSS_ENTROPY:
        labels = np.asarray(targets).reshape(-1).astype(np.int64)
        if np.any(labels < 0) or np.any(labels >= model.output_dim):
            raise ConfigError("labels outside the logit range")
        return -_log_softmax(logits)[np.arange(a.shape[0]), labels]
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    r = logits[:, 0] - y
    return 0.5 * r * r


def batch_mean_loss(model, xs, targets, loss: LossKind) -> float:
    """Mean per-sample loss over a batch, accumulated left to right."""
    losses = batch_losses(model, xs, targets, loss)
    return float(np.cumsum(losses)[-1]) / losses.shape[0]


def loss_and_grad_input(model, x, target, loss: LossKind) -> tuple[float, np.ndarray]:
    """Loss and exact input gradient at a single point."""
    dim = model.input_dim
    xs, _ = _as_batch(x, dim, "loss_and_grad_input")
    losses, grads = batch_loss_and_input_grads(model, xs, [target], loss)
    return float(losses[0]), grads[0]


def grad_input(model, x, target, loss: LossKind) -> Tensor:
    """Exact gradient of the scalar loss with respect to the input."""
    _, g = loss_and_grad_input(model, x, target, loss)
    return tensor(g)


def grad_params(model: MlpModel, batch, loss: LossKind) -> list[tuple[Tensor, Tensor]]:
    """Mean-over-batch gradient of the loss for every weight and bias.

    ``batch`` is an ``(inputs, targets)`` pair with inputs of shape (N, n).
    Returns one (weight_grad, bias_grad) pair per layer, in layer order.
    """
    if not isinstance(model, MlpModel):
        raise ConfigError("grad_params operates on MLP models")
    _check_pairing(model, loss)
    xs_raw, targets = batch
    xs = xs_raw.array if isinstance(xs_raw, Tensor) else np.asarray(xs_raw, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.input_dim:
        raise DimensionError(f"batch inputs must be (N, {model.input_dim}), got {xs.shape}")
    n = xs.shape[0]
    if n == 0:
        raise ConfigError("empty batch")

    logits, inputs, masks = _mlp_forward_cached(model, xs)
    if loss is LossKind.CROSS_ENTROPY:
        labels = np.asarray(targets).reshape(-1).astype(np.int64)
        logp = _log_softmax(logits)
        delta = np.exp(logp)
        delta[np.arange(n), labels] -= 1.0
    else:
        y = np.asarray(targets, dtype=np.float64).reshape(-1)
        delta = (logits[:, 0] - y)[:, None]

    grads: list[tuple[Tensor, Tensor]] = []
    for i in range(len(model.layers) - 1, -1, -1):
        dw = serial_matmul(delta.T, inputs[i]) / n
        db = (np.cumsum(delta, axis=0)[-1, :] if n > 1 else delta[0, :].copy()) / n
        grads.append((tensor(dw), tensor(db)))
        if i > 0:
            delta = serial_matmul(delta, model.layers[i][0].array) * masks[i - 1]
    grads.reverse()
    return grads


def hidden_preactivations(model, x) -> list[np.ndarray]:
    """Pre-activation values of every ReLU layer at ``x`` (kink diagnostics)."""
    xs, single = _as_batch(x, model.input_dim, "hidden_preactivations")
    if isinstance(model, TheoryModel):
        z = serial_matmul(xs, model.w2.array.T)
        return [z[0] if single else z]
    out = []
    z = xs
    for i, (w, b) in enumerate(model.layers):
        a = serial_matmul(z, w.array.T) + b.array[None, :]
        if i < len(model.layers) - 1:
            out.append(a[0] if single else a)
            z = np.maximum(a, 0.0)
    return out
