"""Measurements over attack results: accuracy, boundary occupancy, step-size
decay, perturbation histograms, and per-step loss gains.

Boundary ratio is the fraction of perturbation entries sitting at the ball
surface (|d_i| >= eps - tol).  Signed updates push every touched coordinate to
the surface, raw-gradient updates rarely do, and the hidden-variable rule sits
in between; the ratio is the cheapest fingerprint separating the three.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor

__all__ = [
    "HistogramSpec",
    "boundary_ratio",
    "robust_accuracy",
    "mean_step_change",
    "perturbation_histogram",
    "adversarial_gain_series",
    "export_report",
    "export_histogram",
]


def _arr(x) -> np.ndarray:
    return x.array if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def boundary_ratio(delta, eps: float, tol: float | None = None) -> float:
    """Fraction of entries with |d_i| >= eps - tol.  Default tol = 1e-6 * eps.

    The input must already satisfy the ball constraint up to tol.  eps == 0
    is the null perturbation; every entry trivially sits at the (degenerate)
    surface, so the ratio is defined as 1.0.
    """
    d = _arr(delta)
    if eps < 0:
        raise ConfigError(f"radius must be >= 0, got {eps}")
    if d.size == 0:
        raise ConfigError("empty perturbation has no boundary ratio")
    if tol is None:
        tol = 1e-6 * eps
    if np.any(np.abs(d) > eps + tol):
        raise ConfigError(f"perturbation exceeds the radius {eps} (clipped input expected)")
    if eps == 0.0:
        return 1.0
    return float(np.count_nonzero(np.abs(d) >= eps - tol)) / d.size


def robust_accuracy(model, targets, results: Sequence) -> float:
    """Fraction of attacked samples the model still labels correctly."""
    ts = np.asarray(targets)
    if len(results) == 0:
        raise ConfigError("no attack results to score")
    if ts.shape[0] != len(results):
        raise DimensionError(f"{ts.shape[0]} targets vs {len(results)} results")
    from .models import predict_labels

    xs = np.stack([_arr(r.x_adv) for r in results])
    preds = predict_labels(model, xs)
    return float(np.count_nonzero(preds == ts.astype(np.int64))) / len(results)


def mean_step_change(results: Sequence) -> list[float]:
    """Mean over samples of the mean absolute per-coordinate change of the
    *clipped* perturbation at each update.

    Entry ``t`` is the change from trace row ``t`` to ``t+1``; the list has
    ``steps`` entries.  For signed steps far inside the ball every entry of a
    single sample's change is alpha; clipping shrinks it, so a decaying series
    means the ball surface is absorbing the updates.
    """
    if len(results) == 0:
        raise ConfigError("no attack results")
    steps = len(results[0].trace) - 1
    if any(len(r.trace) != steps + 1 for r in results):
        raise DimensionError("traces have different lengths")
    out = []
    for t in range(steps):
        per_sample = []
        for r in results:
            a = r.trace[t].delta_clipped.array
            b = r.trace[t + 1].delta_clipped.array
            per_sample.append(float(np.mean(np.abs(b - a))))
        out.append(float(np.mean(per_sample)))
    return out


@dataclass(frozen=True)
class HistogramSpec:
    """Equal-width bins spanning [-eps, eps] inclusive of both endpoints."""

    eps: float
    bin_count: int = 50

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError(f"histogram radius must be positive, got {self.eps}")
        if self.bin_count < 2:
            raise ConfigError(f"bin count must be >= 2, got {self.bin_count}")


def perturbation_histogram(delta_c, spec: HistogramSpec):
    """Histogram of clipped perturbation entries on the spec's bins.

    ``delta_c`` may be one perturbation or a stack pooled over samples;
    shape is irrelevant, every entry is counted once.  Returns ``(counts,
    edges)`` with counts summing to the entry count and the endpoints -eps
    and +eps landing in the outermost bins.  An out-of-range entry means the
    projection contract was broken upstream, so it raises instead of being
    silently dropped.
    """
    vals = _arr(delta_c).ravel()
    if vals.size == 0:
        raise ConfigError("empty perturbation has no histogram")
    if np.any(np.abs(vals) > spec.eps):
        worst = float(np.max(np.abs(vals)))
        raise ConfigError(f"perturbation entry |{worst}| exceeds radius {spec.eps}; clipped input expected")
    counts, edges = np.histogram(vals, bins=spec.bin_count, range=(-spec.eps, spec.eps))
    return counts.astype(np.int64), edges


def adversarial_gain_series(result) -> list[float]:
    """Per-step loss gains g(t+1) - g(t) along one trace.  Their running sum
    telescopes to g(t) - g(0) exactly (same additions, same order)."""
    losses = [row.loss for row in result.trace]
    return [losses[t + 1] - losses[t] for t in range(len(losses) - 1)]


REPORT_HEADER = ["algorithm", "step", "robust_accuracy", "boundary_ratio", "mean_change"]


def export_report(rows: Sequence[dict], fileobj: io.TextIOBase, meta: str | None = None):
    """Write per-algorithm, per-step summary rows as CSV.

    Each row dict carries the header's keys; floats are serialized with repr
    so a rerun under the same config is byte-identical.
    """
    w = csv.writer(fileobj, lineterminator="\n")
    if meta is not None:
        fileobj.write(f"# {meta}\n")
    w.writerow(REPORT_HEADER)
    for row in rows:
        w.writerow(
            [
                row["algorithm"],
                row["step"],
                repr(float(row["robust_accuracy"])),
                repr(float(row["boundary_ratio"])),
                repr(float(row["mean_change"])),
            ]
        )


HISTOGRAM_HEADER = ["step", "bin_lo", "bin_hi", "count"]


def export_histogram(entries: Sequence[tuple], fileobj: io.TextIOBase, meta: str | None = None):
    """Write histograms as CSV rows (step, bin_lo, bin_hi, count).

    ``entries`` is a sequence of (step, counts, edges) triples, so one file
    can hold the distribution at several attack steps.
    """
    w = csv.writer(fileobj, lineterminator="\n")
    if meta is not None:
        fileobj.write(f"# {meta}\n")
    w.writerow(HISTOGRAM_HEADER)
    for step, counts, edges in entries:
        for i in range(len(counts)):
            w.writerow([step, repr(float(edges[i])), repr(float(edges[i + 1])), int(counts[i])])
