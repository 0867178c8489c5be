"""Numerical audit of the one-step loss-gain bound for the two-layer model.

For f(x) = w1' relu(w2 x) with squared-error loss g(x) = 0.5 (f(x) - y*)^2,
the gain between consecutive clipped iterates obeys

    g(x + d1) - g(x + d0)
        <= (sqrt(2)/2) * L(d0, d1) * (sqrt(g(x + d1)) + sqrt(g(x + d0)))

where L(d0, d1) = |w1|' |w2| |d1 - d0| (all absolute values entrywise).  The
bound factors through two pieces checked separately:

  function difference:  |f(x + a) - f(x + b)| <= |w1|' |w2| |a - b|
  estimation error:     |0.5 f(x + a) + 0.5 f(x + b) - y*|
                            <= (sqrt(2)/2) (sqrt(g(x + a)) + sqrt(g(x + b)))

The estimation-error check takes an ordered pair (a, b); its mixed form pairs
the two evaluation points rather than using one point twice, which is the
pairing the gain bound actually needs.

Every check reports lhs, rhs, and slack = rhs - lhs; "satisfied" allows a
relative slack of 1e-9 * max(1, |rhs|) to absorb float roundoff.  The fuzz
driver hammers the three inequalities over random instances and dumps a
hex-float reproducer file per violation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .models import TheoryModel, forward_theory, loss_theory
from .tensor import Tensor, tensor

__all__ = [
    "REL_SLACK",
    "SignSplit",
    "sign_split",
    "BoundReport",
    "FuzzFailure",
    "FuzzReport",
    "lipschitz_term",
    "theorem1_check",
    "lemma1_check",
    "lemma2_check",
    "step_gain_series",
    "run_fuzz",
    "format_reproducer",
]

REL_SLACK = 1e-9


@dataclass(frozen=True)
class SignSplit:
    """Split of a vector into its positive and negative parts.

    w_plus = 0.5 * (w + |w|) and w_minus = 0.5 * (w - |w|).  Both halves are
    exact in floating point: w_plus + w_minus reproduces w bitwise, and
    w_plus - w_minus reproduces |w| bitwise.
    """

    w_plus: Tensor
    w_minus: Tensor


def sign_split(w) -> SignSplit:
    a = w.array if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64)
    mag = np.abs(a)
    return SignSplit(w_plus=tensor(0.5 * (a + mag)), w_minus=tensor(0.5 * (a - mag)))


@dataclass(frozen=True)
class BoundReport:
    """One inequality evaluation, expected lhs <= rhs.

    ``slack`` is rhs - lhs (non-negative when the bound holds cleanly);
    ``satisfied`` allows lhs to exceed rhs by 1e-9 * max(1, |rhs|).
    """

    lhs: float
    rhs: float
    satisfied: bool
    slack: float


def _report(lhs: float, rhs: float) -> BoundReport:
    satisfied = lhs <= rhs + REL_SLACK * max(1.0, abs(rhs))
    return BoundReport(lhs=lhs, rhs=rhs, satisfied=satisfied, slack=rhs - lhs)


def _arr(x) -> np.ndarray:
    return x.array if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def lipschitz_term(model: TheoryModel, a, b) -> float:
    """|w1|' |w2| |a - b|, accumulated left to right.

    |w1| is formed through the sign split (w_plus - w_minus), which is exact,
    so the constant is identical however the caller obtained w1.
    """
    w2 = model.w2.array
    d = np.abs(_arr(a) - _arr(b))
    if d.shape != (w2.shape[1],):
        raise DimensionError(f"perturbation shape {d.shape} does not match input dim {w2.shape[1]}")
    split = sign_split(model.w1)
    w1_abs = split.w_plus.array - split.w_minus.array
    inner = np.cumsum(np.abs(w2) * d[np.newaxis, :], axis=1)[:, -1]
    return float(np.cumsum(w1_abs * inner)[-1])


def theorem1_check(model: TheoryModel, x, y_star: float, delta_c_t, delta_c_t1) -> BoundReport:
    """Gain bound between consecutive clipped perturbations of one input.

    Callers supply in-ball (already clipped) perturbations; the inequality
    itself is valid for any pair of equal-shape perturbations.
    """
    xa = _arr(x)
    g0 = loss_theory(model, xa + _arr(delta_c_t), y_star)
    g1 = loss_theory(model, xa + _arr(delta_c_t1), y_star)
    lhs = g1 - g0
    rhs = (math.sqrt(2.0) / 2.0) * lipschitz_term(model, delta_c_t, delta_c_t1) * (
        math.sqrt(g1) + math.sqrt(g0)
    )
    return _report(lhs, rhs)


def lemma1_check(model: TheoryModel, x, a, b) -> BoundReport:
    """Output difference bounded by the entrywise Lipschitz constant."""
    xa = _arr(x)
    lhs = abs(forward_theory(model, xa + _arr(a)) - forward_theory(model, xa + _arr(b)))
    rhs = lipschitz_term(model, a, b)
    return _report(lhs, rhs)


def lemma2_check(model: TheoryModel, x, y_star: float, a, b) -> BoundReport:
    """Midpoint residual bounded through the square roots of the losses.

    Equality holds when a == b, so the bound is tight.
    """
    xa = _arr(x)
    fa = forward_theory(model, xa + _arr(a))
    fb = forward_theory(model, xa + _arr(b))
    ga = loss_theory(model, xa + _arr(a), y_star)
    gb = loss_theory(model, xa + _arr(b), y_star)
    lhs = abs(0.5 * fa + 0.5 * fb - y_star)
    rhs = (math.sqrt(2.0) / 2.0) * (math.sqrt(ga) + math.sqrt(gb))
    return _report(lhs, rhs)


def step_gain_series(trace, model: TheoryModel, x, y_star: float) -> list[BoundReport]:
    """Gain-bound check on every consecutive pair of clipped iterates.

    ``trace`` is an attack trace (a sequence of step rows with
    ``delta_clipped``) or an AttackResult.  Row t of the output reports the
    realized gain of update t+1 as lhs against the bound as rhs.
    """
    rows = trace.trace if hasattr(trace, "trace") else tuple(trace)
    if len(rows) < 2:
        raise ConfigError(f"need at least 2 trace rows, got {len(rows)}")
    return [
        theorem1_check(model, x, y_star, rows[t].delta_clipped, rows[t + 1].delta_clipped)
        for t in range(len(rows) - 1)
    ]


@dataclass(frozen=True)
class FuzzFailure:
    """One violated inequality with everything needed to replay it."""

    seed: int
    index: int
    check: str
    report: BoundReport
    w1: Tensor
    w2: Tensor
    x: Tensor
    y_star: float
    delta0: Tensor
    delta1: Tensor


@dataclass(frozen=True)
class FuzzReport:
    """Campaign outcome.  ``worst_rel_excess`` is the largest value of
    (lhs - rhs) / max(1, |rhs|) seen anywhere; ``worst_index`` and
    ``worst_check`` identify the instance and inequality that produced it
    (first winner on ties, so reruns agree).  The campaign is clean when the
    excess stays at or below the 1e-9 tolerance."""

    instances: int
    checks: int
    violations: int
    worst_rel_excess: float
    worst_index: int
    worst_check: str
    failures: tuple[FuzzFailure, ...]

    @property
    def clean(self) -> bool:
        return self.violations == 0


def format_reproducer(f: FuzzFailure) -> str:
    """Hex-float dump of a failing instance; paste-able back into tests."""

    def hx(a) -> str:
        return "[" + ", ".join(float.hex(float(v)) for v in np.ravel(_arr(a))) + "]"

    return "\n".join(
        [
            f"campaign seed {f.seed}, instance {f.index}, check {f.check}",
            f"lhs = {f.report.lhs!r}",
            f"rhs = {f.report.rhs!r}",
            f"slack = {f.report.slack!r}",
            f"dims: hidden {f.w2.shape[0]}, input {f.w2.shape[1]}",
            f"w1 = {hx(f.w1)}",
            f"w2 = {hx(f.w2)}",
            f"x = {hx(f.x)}",
            f"y_star = {float.hex(f.y_star)}",
            f"delta0 = {hx(f.delta0)}",
            f"delta1 = {hx(f.delta1)}",
        ]
    )


def run_fuzz(instances: int, seed: int = 0, max_failures: int = 10, reproducer_dir=None) -> FuzzReport:
    """Random-instance campaign over the gain bound and both component bounds.

    Instance i draws from default_rng((seed, i)): hidden and input dims in
    1..8, weights ~ Normal(0,1), x ~ Uniform(-1,1)^n, y* ~ Uniform(-2,2),
    radius ~ Uniform(0.01, 1), and two perturbations uniform in the radius
    ball.  Any instance is reconstructible from (seed, i) alone.  When
    ``reproducer_dir`` is set, each recorded violation is also written there
    as one hex-float text file.
    """
    if instances < 1:
        raise ConfigError(f"instances must be >= 1, got {instances}")

    sqrt_half = math.sqrt(2.0) / 2.0
    violations = 0
    checks = 0
    worst = -math.inf
    worst_index = -1
    worst_check = ""
    failures: list[FuzzFailure] = []

    for i in range(instances):
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

        # Lean inline forwards; bitwise-identical to the model-module fold
        # (asserted in the test suite), kept local for fuzz throughput.
        h0 = np.maximum((w2 * (x + d0)[np.newaxis, :]).cumsum(axis=1)[:, -1], 0.0)
        h1 = np.maximum((w2 * (x + d1)[np.newaxis, :]).cumsum(axis=1)[:, -1], 0.0)
        f0 = float((w1 * h0).cumsum()[-1])
        f1 = float((w1 * h1).cumsum()[-1])
        g0 = 0.5 * (f0 - y_star) ** 2
        g1 = 0.5 * (f1 - y_star) ** 2
        lip = float(
            (np.abs(w1) * np.abs(w2 * np.abs(d1 - d0)[np.newaxis, :]).cumsum(axis=1)[:, -1]).cumsum()[-1]
        )

        trio = (
            ("theorem1", g1 - g0, sqrt_half * lip * (math.sqrt(g1) + math.sqrt(g0))),
            ("lemma1", abs(f1 - f0), lip),
            ("lemma2", abs(0.5 * f0 + 0.5 * f1 - y_star), sqrt_half * (math.sqrt(g0) + math.sqrt(g1))),
        )
        for name, lhs, rhs in trio:
            checks += 1
            rel = (lhs - rhs) / max(1.0, abs(rhs))
            if rel > worst:
                worst = rel
                worst_index = i
                worst_check = name
            if rel > REL_SLACK:
                violations += 1
                if len(failures) < max_failures:
                    failures.append(
                        FuzzFailure(
                            seed=seed,
                            index=i,
                            check=name,
                            report=BoundReport(lhs=lhs, rhs=rhs, satisfied=False, slack=rhs - lhs),
                            w1=tensor(w1),
                            w2=tensor(w2),
                            x=tensor(x),
                            y_star=y_star,
                            delta0=tensor(d0),
                            delta1=tensor(d1),
                        )
                    )

    if reproducer_dir is not None and failures:
        os.makedirs(reproducer_dir, exist_ok=True)
        for f in failures:
            path = os.path.join(reproducer_dir, f"violation_{f.index}_{f.check}.txt")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(format_reproducer(f) + "\n")

    return FuzzReport(
        instances=instances,
        checks=checks,
        violations=violations,
        worst_rel_excess=worst,
        worst_index=worst_index,
        worst_check=worst_check,
        failures=tuple(failures),
    )
