"""Update rules, projection, and driver for L-infinity-bounded attacks.

Three iterative update rules are implemented.  All of them evaluate the loss
gradient at the *clipped* point ``x + clip(delta)``; they differ in what state
the step is applied to:

``SIGN_PGD``   next = clip(delta) + alpha * sign(grad)
``RAW_PGD``    next = clip(delta) + alpha * grad
``RGD``        next = delta       + alpha * grad

``RGD`` keeps a hidden, unclipped accumulator: the ball constraint enters only
through the gradient evaluation point, turning the constrained search into an
unconstrained one.  Clipping the hidden state happens when the perturbation is
*read* (per-step traces and the final output), never when it is updated, so no
magnitude information is destroyed between steps.  When clipping never
activates, ``RGD`` and ``RAW_PGD`` coincide bitwise.

The driver records a per-step trace (hidden and clipped perturbation, loss,
gradient infinity-norm, boundary ratio) including a row for the initial state,
so per-step gains are computable from the first update on.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from . import metrics
from .errors import ConfigError, DimensionError, NumericalError
from .models import LossKind, MlpModel, batch_loss_and_input_grads, loss_and_grad_input
from .tensor import Tensor, tensor

__all__ = [
    "Rule",
    "Init",
    "AttackConfig",
    "StepTrace",
    "AttackResult",
    "project_eps",
    "sign_of",
    "init_delta",
    "step_sign_pgd",
    "step_raw_pgd",
    "step_rgd",
    "run_attack",
    "craft_batch",
    "attack_dataset",
    "grid_search_alpha",
    "export_traces",
]


class Rule(Enum):
    SIGN_PGD = "sign"
    RAW_PGD = "raw"
    RGD = "rgd"


class Init(Enum):
    ZERO = "zero"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class AttackConfig:
    """Full specification of one attack run.

    ``eps`` is the L-infinity radius; ``eps == 0`` is accepted as the null
    attack (no perturbation, used for clean-accuracy baselines).  ``alpha``
    is the step size, ``steps`` the number of updates.  ``hybrid_switch=K``
    runs the hidden-variable rule for the first K updates and signed steps
    for the rest, continuing from the clipped state.  ``domain_clamp``
    optionally boxes the final adversarial input (e.g. (0, 1) for image-like
    data); intermediate updates never see the box.
    """

    eps: float
    alpha: float
    steps: int
    rule: Rule = Rule.SIGN_PGD
    init: Init = Init.ZERO
    domain_clamp: tuple[float, float] | None = None
    seed: int = 0
    hybrid_switch: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.eps) or self.eps < 0:
            raise ConfigError(f"eps must be >= 0 and finite, got {self.eps}")
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.hybrid_switch is not None and not 0 <= self.hybrid_switch <= self.steps:
            raise ConfigError(f"hybrid switch step must lie in [0, {self.steps}]")
        if self.domain_clamp is not None:
            lo, hi = self.domain_clamp
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"domain clamp must be a finite (lo, hi) box, got {self.domain_clamp}")


@dataclass(frozen=True)
class StepTrace:
    """State snapshot at one step: hidden and clipped perturbation plus
    the loss, gradient infinity-norm, and boundary ratio at the clipped point."""

    step: int
    delta_hidden: Tensor
    delta_clipped: Tensor
    loss: float
    grad_inf_norm: float
    boundary_ratio: float


@dataclass(frozen=True)
class AttackResult:
    """Final adversarial input, final clipped perturbation, the full per-step
    trace (steps + 1 rows, index 0 is the initial state), and a success flag."""

    x_adv: Tensor
    delta: Tensor
    trace: tuple[StepTrace, ...]
    success: bool


def project_eps(delta, eps: float) -> Tensor:
    """Entrywise clamp of ``delta`` to the interval [-eps, eps]; idempotent."""
    if not np.isfinite(eps) or eps <= 0:
        raise ConfigError(f"projection radius must be positive, got {eps}")
    d = delta.array if isinstance(delta, Tensor) else np.asarray(delta, dtype=np.float64)
    return tensor(np.clip(d, -eps, eps))


def sign_of(g) -> Tensor:
    """Entrywise sign: positive -> 1, negative -> -1, zero -> 0."""
    a = g.array if isinstance(g, Tensor) else np.asarray(g, dtype=np.float64)
    return tensor(np.sign(a))


def init_delta(config: AttackConfig, shape) -> Tensor:
    """Initial perturbation: zeros, or i.i.d. uniform(-eps, eps) draws from a
    generator seeded with ``config.seed``."""
    if config.init is Init.ZERO or config.eps == 0.0:
        return tensor(np.zeros(shape, dtype=np.float64))
    rng = np.random.default_rng(config.seed)
    return tensor(rng.uniform(-config.eps, config.eps, size=shape))


def step_sign_pgd(delta_prev_clipped, grad, alpha: float) -> Tensor:
    """Signed update from the clipped state: every coordinate moves by
    exactly +alpha, -alpha, or 0."""
    dc = _arr(delta_prev_clipped)
    g = _arr(grad)
    _same_shape(dc, g)
    return tensor(dc + alpha * np.sign(g))


def step_raw_pgd(delta_prev_clipped, grad, alpha: float) -> Tensor:
    """Raw-gradient update from the clipped state."""
    dc = _arr(delta_prev_clipped)
    g = _arr(grad)
    _same_shape(dc, g)
    return tensor(dc + alpha * g)


def step_rgd(delta_prev_hidden, grad_at_clipped, alpha: float) -> Tensor:
    """Raw-gradient update applied to the hidden (unclipped) state.

    The caller must supply the gradient evaluated at the clipped point; the
    hidden state itself is free to leave the ball.
    """
    d = _arr(delta_prev_hidden)
    g = _arr(grad_at_clipped)
    _same_shape(d, g)
    return tensor(d + alpha * g)


def _arr(x) -> np.ndarray:
    return x.array if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionError(f"operand shapes disagree: {a.shape} vs {b.shape}")


def _success(model, x_adv: np.ndarray, target, loss: LossKind, loss_final: float, loss_init: float) -> bool:
    if loss is LossKind.CROSS_ENTROPY:
        from .models import predict_labels

        return int(predict_labels(model, x_adv)[0]) != int(target)
    return loss_final > loss_init


def run_attack(model, x, target, loss: LossKind, config: AttackConfig) -> AttackResult:
    """Run the configured rule for ``config.steps`` updates on one sample.

    The trace has ``steps + 1`` rows; row ``t`` describes the state before
    update ``t+1``.  Gradients are always taken at the clipped point.  A NaN
    loss or gradient aborts with the offending step index.
    """
    xa = _arr(x)
    if config.domain_clamp is not None:
        lo, hi = config.domain_clamp
        if np.any(xa < lo) or np.any(xa > hi):
            raise ConfigError("input lies outside the configured domain box")

    if config.eps == 0.0:
        return _null_attack(model, xa, target, loss, config)

    tol = 1e-6 * config.eps
    delta = init_delta(config, xa.shape).array
    trace: list[StepTrace] = []
    loss0 = None
    for t in range(config.steps + 1):
        clipped = np.clip(delta, -config.eps, config.eps)
        loss_t, grad = loss_and_grad_input(model, xa + clipped, target, loss)
        if not np.isfinite(loss_t) or not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite loss or gradient at step {t}")
        trace.append(
            StepTrace(
                step=t,
                delta_hidden=tensor(delta),
                delta_clipped=tensor(clipped),
                loss=loss_t,
                grad_inf_norm=float(np.max(np.abs(grad))) if grad.size else 0.0,
                boundary_ratio=metrics.boundary_ratio(clipped, config.eps, tol),
            )
        )
        if loss0 is None:
            loss0 = loss_t
        if t == config.steps:
            break
        rule = config.rule
        if config.hybrid_switch is not None:
            rule = Rule.RGD if t < config.hybrid_switch else Rule.SIGN_PGD
        if rule is Rule.SIGN_PGD:
            delta = clipped + config.alpha * np.sign(grad)
        elif rule is Rule.RAW_PGD:
            delta = clipped + config.alpha * grad
        else:
            delta = delta + config.alpha * grad

    final = trace[-1]
    x_adv = xa + final.delta_clipped.array
    if config.domain_clamp is not None:
        x_adv = np.clip(x_adv, config.domain_clamp[0], config.domain_clamp[1])
    return AttackResult(
        x_adv=tensor(x_adv),
        delta=final.delta_clipped,
        trace=tuple(trace),
        success=_success(model, x_adv, target, loss, final.loss, loss0),
    )


def _null_attack(model, xa: np.ndarray, target, loss: LossKind, config: AttackConfig) -> AttackResult:
    """eps == 0: the adversarial input is the input itself, bit for bit."""
    loss_t, grad = loss_and_grad_input(model, xa, target, loss)
    if not np.isfinite(loss_t) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite loss or gradient at step 0")
    zero = tensor(np.zeros_like(xa))
    gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
    row = lambda t: StepTrace(t, zero, zero, loss_t, gnorm, metrics.boundary_ratio(zero.array, 0.0, 0.0))
    trace = tuple(row(t) for t in range(config.steps + 1))
    return AttackResult(
        x_adv=tensor(xa),
        delta=zero,
        trace=trace,
        success=_success(model, xa, target, loss, loss_t, loss_t),
    )


def craft_batch(model, inputs, targets, loss: LossKind, config: AttackConfig, seeds=None) -> Tensor:
    """Adversarial inputs for a whole batch in one pass, no traces.

    Bitwise identical to running :func:`run_attack` row by row, because batch
    gradient rows are computed independently of each other.  ``seeds`` gives
    the per-sample init seed (default ``config.seed ^ row``); ignored for zero
    init.  This is the fast path for adversarial training and bulk accuracy
    evaluation.
    """
    xs = _arr(inputs)
    ts = np.asarray(targets)
    if xs.ndim != 2 or xs.shape[0] != ts.shape[0]:
        raise DimensionError(f"batch inputs (N, n) with N targets required, got {xs.shape} and {ts.shape}")
    if config.domain_clamp is not None:
        lo, hi = config.domain_clamp
        if np.any(xs < lo) or np.any(xs > hi):
            raise ConfigError("input lies outside the configured domain box")
    if config.eps == 0.0:
        return tensor(xs)

    n, dim = xs.shape
    if seeds is None:
        seeds = [config.seed ^ i for i in range(n)]
    if len(seeds) != n:
        raise DimensionError(f"{len(seeds)} seeds for {n} samples")
    if config.init is Init.UNIFORM:
        delta = np.stack(
            [np.random.default_rng(s).uniform(-config.eps, config.eps, size=dim) for s in seeds]
        )
    else:
        delta = np.zeros_like(xs)

    for t in range(config.steps):
        clipped = np.clip(delta, -config.eps, config.eps)
        losses, grads = batch_loss_and_input_grads(model, xs + clipped, ts, loss)
        if not np.all(np.isfinite(losses)) or not np.all(np.isfinite(grads)):
            raise NumericalError(f"non-finite loss or gradient at step {t}")
        rule = config.rule
        if config.hybrid_switch is not None:
            rule = Rule.RGD if t < config.hybrid_switch else Rule.SIGN_PGD
        if rule is Rule.SIGN_PGD:
            delta = clipped + config.alpha * np.sign(grads)
        elif rule is Rule.RAW_PGD:
            delta = clipped + config.alpha * grads
        else:
            delta = delta + config.alpha * grads

    x_adv = xs + np.clip(delta, -config.eps, config.eps)
    if config.domain_clamp is not None:
        x_adv = np.clip(x_adv, config.domain_clamp[0], config.domain_clamp[1])
    return tensor(x_adv)


def worker_count() -> int:
    """Worker cap from the RGD_THREADS environment variable (default 1)."""
    raw = os.environ.get("RGD_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RGD_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"RGD_THREADS must be >= 1, got {n}")
    return n


def attack_dataset(model, inputs, targets, loss: LossKind, config: AttackConfig) -> list[AttackResult]:
    """Attack each sample independently with per-sample seed ``seed ^ index``.

    Samples are pure and independent, so results are identical whether run
    sequentially or on the RGD_THREADS-capped worker pool.
    """
    xs = _arr(inputs)
    ts = np.asarray(targets)
    if xs.shape[0] != ts.shape[0]:
        raise DimensionError(f"{xs.shape[0]} inputs vs {ts.shape[0]} targets")

    def one(i: int) -> AttackResult:
        cfg = replace(config, seed=config.seed ^ i)
        return run_attack(model, xs[i], ts[i], loss, cfg)

    workers = worker_count()
    n = xs.shape[0]
    if workers == 1 or n <= 1:
        return [one(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n)))


def grid_search_alpha(model, inputs, targets, loss: LossKind, config: AttackConfig, grid: Sequence[float]):
    """Pick the step size minimizing robust accuracy over a grid.

    Returns ``(best_alpha, table)`` where the table has one
    ``(alpha, robust_accuracy)`` row per grid entry in grid order.  Ties go
    to the smaller alpha.
    """
    if len(grid) == 0:
        raise ConfigError("step-size grid must be non-empty")
    table = []
    for alpha in grid:
        cfg = replace(config, alpha=float(alpha))
        results = attack_dataset(model, inputs, targets, loss, cfg)
        acc = metrics.robust_accuracy(model, targets, results)
        table.append((float(alpha), acc))
    best_alpha, _ = min(table, key=lambda row: (row[1], row[0]))
    return best_alpha, table


TRACE_HEADER = ["sample", "step", "loss", "grad_inf_norm", "boundary_ratio", "linf_hidden", "linf_clipped"]


def export_traces(results: Sequence[AttackResult], fileobj: io.TextIOBase, meta: str | None = None):
    """Write per-sample, per-step trace rows as CSV."""
    w = csv.writer(fileobj, lineterminator="\n")
    if meta is not None:
        fileobj.write(f"# {meta}\n")
    w.writerow(TRACE_HEADER)
    for i, res in enumerate(results):
        for row in res.trace:
            hid = row.delta_hidden.array
            clp = row.delta_clipped.array
            w.writerow(
                [
                    i,
                    row.step,
                    repr(row.loss),
                    repr(row.grad_inf_norm),
                    repr(row.boundary_ratio),
                    repr(float(np.max(np.abs(hid))) if hid.size else 0.0),
                    repr(float(np.max(np.abs(clp))) if clp.size else 0.0),
                ]
            )
