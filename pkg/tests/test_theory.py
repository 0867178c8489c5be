import math
import os

import numpy as np
import pytest

import rgdkit.theory as theory
from rgdkit.attack import AttackConfig, Init, Rule, run_attack
from rgdkit.errors import ConfigError, DimensionError
from rgdkit.models import LossKind, TheoryModel, forward_theory, loss_theory
from rgdkit.tensor import tensor
from rgdkit.theory import (
    FuzzReport,
    lemma1_check,
    lemma2_check,
    lipschitz_term,
    run_fuzz,
    sign_split,
    step_gain_series,
    theorem1_check,
)

CANON = TheoryModel(tensor([1.0]), tensor([[1.0]]))


# ---------------------------------------------------------------------------
# sign split


def test_sign_split_by_hand():
    s = sign_split(np.array([2.0, -3.0, 0.0]))
    assert s.w_plus.tolist() == [2.0, 0.0, 0.0]
    assert s.w_minus.tolist() == [0.0, -3.0, 0.0]


def test_sign_split_identities_exact_fuzz():
    rng = np.random.default_rng(3)
    for _ in range(500):
        w = rng.standard_normal(int(rng.integers(1, 9))) * rng.choice([1e-6, 1.0, 1e6])
        s = sign_split(w)
        assert np.array_equal(s.w_plus.array + s.w_minus.array, w)
        assert np.array_equal(s.w_plus.array - s.w_minus.array, np.abs(w))
        assert np.all(s.w_plus.array >= 0.0)
        assert np.all(s.w_minus.array <= 0.0)


# ---------------------------------------------------------------------------
# Lipschitz constant


def test_lipschitz_term_by_hand():
    m = TheoryModel(tensor([1.0, -2.0]), tensor([[3.0, -1.0], [0.5, 4.0]]))
    # |w1|' |w2| |a-b| with a-b = [0.1, -0.2]
    a, b = np.array([0.1, 0.0]), np.array([0.0, 0.2])
    d = np.abs(a - b)
    expected = 0.0
    for j in range(2):
        inner = 0.0
        for k in range(2):
            inner += abs(m.w2.array[j, k]) * d[k]
        expected += abs(m.w1.array[j]) * inner
    assert lipschitz_term(m, a, b) == expected


def test_lipschitz_term_shape_check():
    with pytest.raises(DimensionError):
        lipschitz_term(CANON, np.zeros(2), np.zeros(2))


# ---------------------------------------------------------------------------
# the gain bound on the canonical instance
#
# x 0.5, y* 0, step 0 -> 0.1: losses 0.125 -> 0.18, Lipschitz constant 0.1,
# bound (sqrt(2)/2) * 0.1 * (sqrt(0.18) + sqrt(0.125)) = 0.055.  The realized
# gain is 0.055 as well: the bound is tight here, satisfied by roundoff only.


def test_theorem1_canonical_instance():
    rep = theorem1_check(CANON, [0.5], 0.0, [0.0], [0.1])
    assert rep.lhs == 0.18 - 0.125
    assert rep.rhs == 0.055000000000000014
    assert abs(rep.rhs - 0.055) < 1e-15
    assert rep.satisfied
    assert 0.0 <= rep.slack < 1e-15


def test_theorem1_zero_change():
    rep = theorem1_check(CANON, [0.5], 0.0, [0.07], [0.07])
    assert rep.lhs == 0.0
    assert rep.rhs == 0.0
    assert rep.satisfied and rep.slack == 0.0


def test_theorem1_negative_gain_keeps_nonnegative_bound():
    # stepping downhill: gain is negative, bound is still >= 0
    rep = theorem1_check(CANON, [0.5], 0.0, [0.1], [-0.1])
    assert rep.lhs < 0.0
    assert rep.rhs > 0.0
    assert rep.satisfied


def test_lemma1_cases():
    # moving 0.2 across a unit-slope model changes the output by at most 0.2
    rep = lemma1_check(CANON, [0.5], [0.1], [-0.1])
    assert rep.rhs == 0.2
    assert rep.lhs <= rep.rhs and rep.satisfied
    # a == b collapses both sides to zero
    rep = lemma1_check(CANON, [0.5], [0.1], [0.1])
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.satisfied
    # dead ReLU region: output difference zero, constant still positive
    rep = lemma1_check(CANON, [-5.0], [0.1], [-0.1])
    assert rep.lhs == 0.0 and rep.rhs == 0.2 and rep.satisfied
    # zero second layer kills both sides
    flat = TheoryModel(tensor([1.0]), tensor([[0.0]]))
    rep = lemma1_check(flat, [0.5], [0.1], [-0.1])
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.satisfied


def test_lemma2_equal_points_are_tight():
    # with a == b the bound reduces to |f - y*| exactly (up to roundoff)
    rep = lemma2_check(CANON, [0.5], 0.0, [0.1], [0.1])
    assert rep.lhs == 0.6
    assert abs(rep.rhs - 0.6) < 1e-15
    assert rep.satisfied


def test_lemma2_midpoint_cancellation():
    # y* exactly between the two outputs: lhs is 0, rhs stays positive
    # (quarters are exact in binary, so the cancellation is exact too)
    rep = lemma2_check(CANON, [0.5], 0.5, [0.25], [-0.25])
    assert rep.lhs == 0.0
    assert rep.rhs > 0.0
    assert rep.satisfied


def test_bound_checks_fuzz_random_instances():
    rng = np.random.default_rng(9)
    for _ in range(300):
        m = TheoryModel.random(int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(10**6)))
        n = m.input_dim
        x = rng.uniform(-1.0, 1.0, n)
        y = float(rng.uniform(-2.0, 2.0))
        eps = float(rng.uniform(0.01, 1.0))
        a, b = rng.uniform(-eps, eps, n), rng.uniform(-eps, eps, n)
        assert theorem1_check(m, x, y, a, b).satisfied
        assert lemma1_check(m, x, a, b).satisfied
        assert lemma2_check(m, x, y, a, b).satisfied


# ---------------------------------------------------------------------------
# per-step audit of attack traces


def test_step_gain_series_canonical_attack():
    cfg = AttackConfig(eps=0.1, alpha=0.1, steps=2, rule=Rule.SIGN_PGD, init=Init.ZERO)
    res = run_attack(CANON, [0.5], 0.0, LossKind.MSE_THEORY, cfg)
    reports = step_gain_series(res, CANON, [0.5], 0.0)
    assert len(reports) == 2
    assert reports[0].lhs == 0.18 - 0.125
    assert reports[1].lhs == 0.0  # clipped state no longer moves
    assert all(r.satisfied for r in reports)
    # the raw trace tuple works as well as the result object
    assert step_gain_series(res.trace, CANON, [0.5], 0.0) == reports


def test_step_gain_series_dead_region_is_all_zero():
    cfg = AttackConfig(eps=0.1, alpha=0.5, steps=4, rule=Rule.RAW_PGD, init=Init.ZERO)
    res = run_attack(CANON, [-5.0], 1.0, LossKind.MSE_THEORY, cfg)
    reports = step_gain_series(res, CANON, [-5.0], 1.0)
    assert [r.lhs for r in reports] == [0.0] * 4
    assert all(r.satisfied for r in reports)


def test_step_gain_series_longer_run_all_satisfied():
    m = TheoryModel.random(4, 3, 11)
    x = np.random.default_rng(11).uniform(-1.0, 1.0, 3)
    cfg = AttackConfig(eps=0.2, alpha=0.3, steps=7, rule=Rule.RGD, init=Init.UNIFORM, seed=2)
    res = run_attack(m, x, 0.7, LossKind.MSE_THEORY, cfg)
    reports = step_gain_series(res, m, x, 0.7)
    assert len(reports) == 7
    assert all(r.satisfied for r in reports)


def test_step_gain_series_needs_two_rows():
    cfg = AttackConfig(eps=0.1, alpha=0.1, steps=1)
    res = run_attack(CANON, [0.5], 0.0, LossKind.MSE_THEORY, cfg)
    with pytest.raises(ConfigError):
        step_gain_series(res.trace[:1], CANON, [0.5], 0.0)


# ---------------------------------------------------------------------------
# fuzz campaign


def test_run_fuzz_clean_campaign():
    report = run_fuzz(5000, seed=0)
    assert report.clean
    assert report.instances == 5000
    assert report.checks == 15000
    assert report.violations == 0
    assert report.failures == ()
    assert report.worst_rel_excess <= theory.REL_SLACK
    assert 0 <= report.worst_index < 5000
    assert report.worst_check in ("theorem1", "lemma1", "lemma2")


def test_run_fuzz_deterministic():
    assert run_fuzz(200, seed=7) == run_fuzz(200, seed=7)
    assert run_fuzz(200, seed=7) != run_fuzz(200, seed=8)


def test_run_fuzz_validation():
    with pytest.raises(ConfigError):
        run_fuzz(0)


def test_inline_forward_matches_model_fold_bitwise():
    # the fuzz driver computes forwards inline for speed; replay its exact
    # draw sequence and pin the inline arithmetic to the model-module fold
    seed = 0
    for i in range(300):
        rng = np.random.default_rng((seed, i))
        m = int(rng.integers(1, 9))
        n = int(rng.integers(1, 9))
        w1 = rng.standard_normal(m)
        w2 = rng.standard_normal((m, n))
        x = rng.uniform(-1.0, 1.0, size=n)
        y_star = float(rng.uniform(-2.0, 2.0))
        eps = float(rng.uniform(0.01, 1.0))
        d0 = rng.uniform(-eps, eps, size=n)
        d1 = rng.uniform(-eps, eps, size=n)

        model = TheoryModel(tensor(w1), tensor(w2))
        for d in (d0, d1):
            h = np.maximum((w2 * (x + d)[np.newaxis, :]).cumsum(axis=1)[:, -1], 0.0)
            f_inline = float((w1 * h).cumsum()[-1])
            assert f_inline == forward_theory(model, x + d)
            g_inline = 0.5 * (f_inline - y_star) ** 2
            assert g_inline == loss_theory(model, x + d, y_star)
        lip_inline = float(
            (np.abs(w1) * np.abs(w2 * np.abs(d1 - d0)[np.newaxis, :]).cumsum(axis=1)[:, -1]).cumsum()[-1]
        )
        assert lip_inline == lipschitz_term(model, d0, d1)


def parse_reproducer(path):
    fields = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        for line in fh:
            key, _, value = line.strip().partition(" = ")
            if value.startswith("["):
                fields[key] = np.array([float.fromhex(v) for v in value[1:-1].split(", ")])
            elif value.startswith("0x") or value.startswith("-0x"):
                fields[key] = float.fromhex(value)
            elif key in ("lhs", "rhs", "slack"):
                fields[key] = float(value)
    fields["header"] = header.strip()
    return fields


def test_forced_violations_write_reproducers(tmp_path, monkeypatch):
    # an impossible tolerance turns every check into a violation; the capped
    # failure list must land on disk as replayable hex dumps
    monkeypatch.setattr(theory, "REL_SLACK", float("-inf"))
    repro = tmp_path / "repro"
    report = run_fuzz(6, seed=5, max_failures=9, reproducer_dir=str(repro))
    assert report.violations == 18
    assert not report.clean
    assert len(report.failures) == 9
    names = sorted(os.listdir(repro))
    assert names == sorted(
        f"violation_{i}_{check}.txt" for i in range(3) for check in ("theorem1", "lemma1", "lemma2")
    )
    monkeypatch.undo()

    # every dumped instance replays to the recorded lhs/rhs exactly
    for fail in report.failures:
        path = repro / f"violation_{fail.index}_{fail.check}.txt"
        fields = parse_reproducer(path)
        hidden = len(fields["w1"])
        model = TheoryModel(tensor(fields["w1"]), tensor(fields["w2"].reshape(hidden, -1)))
        args = (model, fields["x"], fields["y_star"], fields["delta0"], fields["delta1"])
        if fail.check == "theorem1":
            rep = theorem1_check(*args)
        elif fail.check == "lemma1":
            rep = lemma1_check(model, fields["x"], fields["delta0"], fields["delta1"])
        else:
            rep = lemma2_check(*args)
        assert rep.lhs == fields["lhs"]
        assert rep.rhs == fields["rhs"]
        assert f"instance {fail.index}" in fields["header"]
        assert fail.check in fields["header"]


def test_fuzz_report_clean_property():
    clean = FuzzReport(1, 3, 0, -0.5, 0, "lemma1", ())
    dirty = FuzzReport(1, 3, 1, 0.5, 0, "lemma1", ())
    assert clean.clean and not dirty.clean
