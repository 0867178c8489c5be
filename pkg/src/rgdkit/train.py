"""Minibatch SGD training, standard or on adversarially crafted batches.

Adversarial training replaces each minibatch with its attacked version
(crafted against the current weights) before the gradient step.  The attack
consumes no randomness from the training stream: batch order comes from one
generator, perturbation inits are seeded per sample.  Training with a
zero-radius attack is therefore bitwise identical to standard training.

Per-epoch curves record train loss plus clean and robust accuracy on a fixed
seeded evaluation subset.  Robustness in the curves is measured with the
config's evaluation attack, which may be stronger than the training attack
(e.g. more steps); the two must share the same radius so the numbers are
comparable.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attack import AttackConfig, craft_batch
from .data import Dataset
from .errors import ConfigError, NumericalError
from .models import (
    LossKind,
    MlpModel,
    batch_mean_loss,
    grad_params,
    predict_labels,
)
from .tensor import tensor

__all__ = [
    "TrainConfig",
    "EpochRow",
    "TrainResult",
    "EvalReport",
    "train_standard",
    "train_adversarial",
    "evaluate",
    "export_curves",
]


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters plus the attacks used during and after training.

    ``adversarial`` is the inner attack applied to every minibatch (None or
    radius zero means standard training).  ``eval_attack`` is the attack used
    for the robust-accuracy curve column; when both are set their radii must
    agree exactly, otherwise the curve would measure a different threat model
    than the one trained against.  ``eval_cap`` bounds the per-epoch
    evaluation subset so curve bookkeeping stays cheap; ``eval_seed`` fixes
    that subset.
    """

    epochs: int
    batch_size: int
    lr: float
    momentum: float = 0.0
    adversarial: AttackConfig | None = None
    eval_attack: AttackConfig | None = None
    seed: int = 0
    eval_cap: int = 128
    eval_seed: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not np.isfinite(self.lr) or self.lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not np.isfinite(self.momentum) or not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.eval_cap < 1:
            raise ConfigError(f"eval cap must be >= 1, got {self.eval_cap}")
        if self.adversarial is not None and self.eval_attack is not None:
            if self.eval_attack.eps != self.adversarial.eps:
                raise ConfigError(
                    f"eval attack radius {self.eval_attack.eps} differs from "
                    f"training attack radius {self.adversarial.eps}"
                )


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    clean_accuracy: float
    robust_accuracy: float


@dataclass(frozen=True)
class TrainResult:
    model: MlpModel
    curves: tuple[EpochRow, ...]


@dataclass(frozen=True)
class EvalReport:
    """Accuracies on a dataset.  Without an attack (or with radius zero) the
    robust accuracy equals the clean accuracy by construction."""

    clean_accuracy: float
    robust_accuracy: float
    evaluated: int


def _clean_accuracy(model: MlpModel, xs: np.ndarray, ys: np.ndarray) -> float:
    preds = predict_labels(model, xs)
    return float(np.count_nonzero(preds == ys)) / xs.shape[0]


def evaluate(
    model: MlpModel,
    ds: Dataset,
    attack: AttackConfig | None = None,
    max_samples: int | None = None,
    seed: int = 0,
) -> EvalReport:
    """Clean and attacked accuracy, optionally on a seeded random subset.

    The attacked inputs come from the batched crafting path, which matches
    the per-sample driver bitwise.
    """
    if ds.count < 1:
        raise ConfigError("cannot evaluate on an empty dataset")
    xs = ds.inputs.array
    ys = ds.labels
    if max_samples is not None:
        if max_samples < 1:
            raise ConfigError(f"max_samples must be >= 1, got {max_samples}")
        if max_samples < ds.count:
            idx = np.random.default_rng(seed).choice(ds.count, size=max_samples, replace=False)
            xs, ys = xs[idx], ys[idx]
    clean = _clean_accuracy(model, xs, ys)
    if attack is None or attack.eps == 0.0:
        return EvalReport(clean_accuracy=clean, robust_accuracy=clean, evaluated=xs.shape[0])
    x_adv = craft_batch(model, xs, ys, LossKind.CROSS_ENTROPY, attack)
    robust = _clean_accuracy(model, x_adv.array, ys)
    return EvalReport(clean_accuracy=clean, robust_accuracy=robust, evaluated=xs.shape[0])


def _sgd_step(model: MlpModel, grads, velocity, lr: float, momentum: float, where: str) -> MlpModel:
    new_layers = []
    try:
        for i, (w, b) in enumerate(model.layers):
            gw, gb = grads[i]
            velocity[i][0][:] = momentum * velocity[i][0] + gw.array
            velocity[i][1][:] = momentum * velocity[i][1] + gb.array
            new_layers.append(
                (tensor(w.array - lr * velocity[i][0]), tensor(b.array - lr * velocity[i][1]))
            )
    except NumericalError as exc:
        raise NumericalError(f"training diverged at {where}: {exc}")
    return MlpModel(layers=tuple(new_layers))


def _train_loop(
    model: MlpModel,
    ds: Dataset,
    config: TrainConfig,
    attack: AttackConfig | None,
    eval_ds: Dataset | None,
) -> TrainResult:
    if ds.count < 1:
        raise ConfigError("cannot train on an empty dataset")
    if ds.classes > model.output_dim:
        raise ConfigError(f"dataset has {ds.classes} classes but model emits {model.output_dim} logits")
    if ds.dim != model.input_dim:
        raise ConfigError(f"dataset dim {ds.dim} vs model input dim {model.input_dim}")
    shuffle_rng = np.random.default_rng((config.seed, 0))
    target = eval_ds if eval_ds is not None else ds
    curves = []
    loss = LossKind.CROSS_ENTROPY
    velocity = [
        (np.zeros_like(w.array), np.zeros_like(b.array)) for w, b in model.layers
    ]
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(ds.count)
        epoch_loss_sum = 0.0
        for start in range(0, ds.count, config.batch_size):
            where = f"epoch {epoch} batch {start // config.batch_size}"
            rows = order[start : start + config.batch_size]
            xb = ds.inputs.array[rows]
            yb = ds.labels[rows]
            if attack is not None and attack.eps > 0.0:
                seeds = [attack.seed ^ int(r) for r in rows]
                xb = craft_batch(model, xb, yb, loss, attack, seeds=seeds).array
            batch_loss = batch_mean_loss(model, xb, yb, loss)
            if not np.isfinite(batch_loss):
                raise NumericalError(f"non-finite training loss at {where}")
            epoch_loss_sum += batch_loss * rows.size
            grads = grad_params(model, (xb, yb), loss)
            model = _sgd_step(model, grads, velocity, config.lr, config.momentum, where)
        report = evaluate(
            model,
            target,
            attack=config.eval_attack,
            max_samples=min(config.eval_cap, target.count),
            seed=config.eval_seed,
        )
        curves.append(
            EpochRow(
                epoch=epoch,
                train_loss=epoch_loss_sum / ds.count,
                clean_accuracy=report.clean_accuracy,
                robust_accuracy=report.robust_accuracy,
            )
        )
    return TrainResult(model=model, curves=tuple(curves))


def train_standard(
    model: MlpModel,
    ds: Dataset,
    config: TrainConfig,
    eval_ds: Dataset | None = None,
) -> TrainResult:
    """SGD over shuffled minibatches of unmodified inputs.

    ``config.adversarial`` is ignored here; only the evaluation attack (if
    any) is consulted, for the robust column of the curves.  Curves are
    computed on ``eval_ds`` (default: the training set) over a fixed subset
    of at most ``config.eval_cap`` rows.
    """
    return _train_loop(model, ds, config, attack=None, eval_ds=eval_ds)


def train_adversarial(
    model: MlpModel,
    ds: Dataset,
    config: TrainConfig,
    eval_ds: Dataset | None = None,
) -> TrainResult:
    """SGD where every minibatch is attacked against the current weights
    before the gradient step.

    Per-sample attack seeds are ``config.adversarial.seed ^ dataset_row``, so
    the crafted perturbation for a sample does not depend on which batch it
    landed in.  A radius-zero attack degenerates to standard training with
    the same bits.
    """
    if config.adversarial is None:
        raise ConfigError("adversarial training requires config.adversarial")
    return _train_loop(model, ds, config, attack=config.adversarial, eval_ds=eval_ds)


CURVES_HEADER = ["epoch", "train_loss", "clean_acc", "robust_acc"]


def export_curves(curves: Sequence[EpochRow], fileobj: io.TextIOBase, meta: str | None = None):
    """Write per-epoch rows as CSV; floats via repr for byte-stable reruns."""
    w = csv.writer(fileobj, lineterminator="\n")
    if meta is not None:
        fileobj.write(f"# {meta}\n")
    w.writerow(CURVES_HEADER)
    for row in curves:
        w.writerow(
            [row.epoch, repr(row.train_loss), repr(row.clean_accuracy), repr(row.robust_accuracy)]
        )
