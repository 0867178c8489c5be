"""Command-line front end.

Seven subcommands cover the full workflow:

    gen-data    generate a blob dataset file
    train       fit an MLP (standard or adversarial) and save a checkpoint
    attack      compare update rules over a seed list, per-step CSV + summary
    sweep       step-size grid search per (rule, init)
    theorem     random-instance audit of the step-gain bound
    transfer    cross-model attack success rates
    report      per-step plot data for one seed, with perturbation histograms

Every value can come from a flag, a ``key = value`` config file (``--config``),
or a built-in default, in that priority order.  All outputs are deterministic
functions of the resolved configuration: rerunning a command byte-identically
reproduces its files and stdout.  Every CSV starts with a comment line giving
the toolkit version, a hash of the full configuration, and the seed list.

Exit codes: 0 success, 1 configuration or input-format error, 2 numerical
failure during a run, 3 the theorem audit found violated bounds.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Callable, Sequence

import numpy as np

from . import fileio, metrics, theory
from .attack import AttackConfig, Init, Rule, attack_dataset, grid_search_alpha
from .config import (
    parse_bool,
    parse_dims,
    parse_eps,
    parse_float_list,
    provenance,
    read_kv_file,
    resolve,
)
from .data import Dataset, subset, synth_blobs
from .errors import ConfigError, NumericalError, ToolkitError
from .models import LossKind, MlpModel, predict_labels
from .train import TrainConfig, evaluate, export_curves, train_adversarial, train_standard

__all__ = ["main"]

_ALL_RULES = (Rule.SIGN_PGD, Rule.RAW_PGD, Rule.RGD)


def _parse_rule(text: str) -> Rule:
    try:
        return Rule(text.strip().lower())
    except ValueError:
        raise ConfigError(f"unknown rule {text!r}; choose from sign, raw, rgd")


def _parse_rules(text: str) -> tuple[Rule, ...]:
    rules = tuple(_parse_rule(part) for part in text.split(","))
    if len(set(rules)) != len(rules):
        raise ConfigError(f"duplicate rule in {text!r}")
    return rules


def _parse_init(text: str) -> Init:
    try:
        return Init(text.strip().lower())
    except ValueError:
        raise ConfigError(f"unknown init {text!r}; choose from zero, uniform")


def _parse_inits(text: str) -> tuple[Init, ...]:
    inits = tuple(_parse_init(part) for part in text.split(","))
    if len(set(inits)) != len(inits):
        raise ConfigError(f"duplicate init in {text!r}")
    return inits


def _parse_alpha(text: str) -> float:
    value = parse_eps(text)
    if value <= 0:
        raise ConfigError(f"step size must be positive, got {text!r}")
    return value


def _parse_seeds(text: str) -> tuple[int, ...]:
    """A bare integer N means N runs with seeds 0..N-1; a comma-separated
    list names the run seeds explicitly."""
    text = text.strip()
    try:
        if "," in text:
            return tuple(int(part) for part in text.split(",") if part.strip() != "")
        count = int(text)
    except ValueError:
        raise ConfigError(f"seeds must be an integer count or a comma list, got {text!r}")
    if count < 1:
        raise ConfigError(f"seed count must be >= 1, got {count}")
    return tuple(range(count))


def _parse_paths(text: str) -> tuple[str, ...]:
    paths = tuple(part.strip() for part in text.split(",") if part.strip())
    if not paths:
        raise ConfigError(f"no paths in {text!r}")
    return paths


def _parse_steps_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"steps list must be comma-separated integers, got {text!r}")
    if not values:
        raise ConfigError(f"no steps in {text!r}")
    return values


class _Parser(argparse.ArgumentParser):
    """Usage problems surface as ConfigError so they exit 1, not argparse's 2."""

    def error(self, message):
        raise ConfigError(message)


# Each subcommand is declared as (key, parser, default, help).  The same keys
# are accepted in config files; a flag set on the command line wins.
Spec = Sequence[tuple[str, Callable[[str], object], object, str]]


def _resolve(args, spec: Spec) -> dict:
    defaults = {k: d for k, _, d, _ in spec}
    parsers = {k: p for k, p, _, _ in spec}
    flags = {k: getattr(args, k) for k in defaults}
    file_values = read_kv_file(args.config) if args.config else {}
    return resolve(flags, file_values, defaults, parsers)


def _add_spec(parser: argparse.ArgumentParser, spec: Spec):
    parser.add_argument("--config", default=None, help="key = value file supplying defaults")
    for key, typ, default, help_text in spec:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None, help=help_text)


def _require_inputs(r: dict, keys: Sequence[str]):
    """Check every referenced input path before any compute starts."""
    for key in keys:
        value = r.get(key)
        if value is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required")
        paths = value if isinstance(value, tuple) else (value,)
        for path in paths:
            if not os.path.isfile(path):
                raise ConfigError(f"no such file: {path} (--{key.replace('_', '-')})")


def _check_out(path: str):
    parent = os.path.dirname(path) or "."
    if not os.path.isdir(parent):
        raise ConfigError(f"output directory does not exist: {parent}")


def _load_dataset(r: dict) -> Dataset:
    ds = fileio.load_dataset(r["data"])
    limit = r.get("limit")
    if limit is not None:
        if limit < 1:
            raise ConfigError(f"limit must be >= 1, got {limit}")
        ds = subset(ds, np.arange(min(limit, ds.count)))
    return ds


def _load_mlp(path: str) -> MlpModel:
    model = fileio.load_model(path)
    if not isinstance(model, MlpModel):
        raise ConfigError(f"{path} is not an MLP checkpoint")
    return model


def _check_compat(model: MlpModel, ds: Dataset, path: str):
    if ds.dim != model.input_dim:
        raise ConfigError(f"dataset dim {ds.dim} vs model input dim {model.input_dim} ({path})")
    if ds.classes > model.output_dim:
        raise ConfigError(f"dataset has {ds.classes} classes but model emits {model.output_dim} logits ({path})")


def _default_init(rule: Rule) -> Init:
    return Init.UNIFORM if rule is Rule.SIGN_PGD else Init.ZERO


def _rule_alphas(r: dict, rules: Sequence[Rule]) -> dict:
    """Per-rule step size: --alpha-<rule> beats --alpha.  A zero radius never
    moves, so the step size is then irrelevant and defaults to 1."""
    per = {
        Rule.SIGN_PGD: r.get("alpha_sign"),
        Rule.RAW_PGD: r.get("alpha_raw"),
        Rule.RGD: r.get("alpha_rgd"),
    }
    out = {}
    missing = []
    for rule in rules:
        alpha = per[rule] if per[rule] is not None else r.get("alpha")
        if alpha is None:
            if r["eps"] == 0.0:
                alpha = 1.0
            else:
                missing.append(rule.value)
        out[rule] = alpha
    if missing:
        raise ConfigError(f"missing step size for: {', '.join(missing)} (--alpha or --alpha-<rule>)")
    return out


def _attack_for(rule: Rule, alpha: float, r: dict, seed: int, steps: int) -> AttackConfig:
    init = r.get("init") or _default_init(rule)
    return AttackConfig(
        eps=r["eps"],
        alpha=alpha,
        steps=steps,
        rule=rule,
        init=init,
        domain_clamp=(0.0, 1.0) if r["clamp"] else None,
        seed=seed,
    )


def _per_step_series(model: MlpModel, xs: np.ndarray, ys: np.ndarray, results, steps: int, clamp: bool):
    """Robust accuracy and mean boundary ratio at steps 0..T, plus the mean
    step change series for steps 1..T, all from recorded traces."""
    acc = np.empty(steps + 1)
    boundary = np.empty(steps + 1)
    for t in range(steps + 1):
        x_t = np.stack([xs[i] + res.trace[t].delta_clipped.array for i, res in enumerate(results)])
        if clamp:
            x_t = np.clip(x_t, 0.0, 1.0)
        preds = predict_labels(model, x_t)
        acc[t] = float(np.count_nonzero(preds == ys)) / len(results)
        boundary[t] = float(np.mean([res.trace[t].boundary_ratio for res in results]))
    changes = np.asarray(metrics.mean_step_change(results), dtype=np.float64)
    return acc, boundary, changes


# ---------------------------------------------------------------------------
# subcommands


_GEN_DATA: Spec = (
    ("n", int, 2000, "number of samples"),
    ("dim", int, 16, "input dimension"),
    ("classes", int, 2, "number of classes"),
    ("spread", parse_eps, 0.1, "noise scale around each class center"),
    ("seed", int, 0, "generator seed"),
    ("out", str, None, "output dataset path"),
)


def cmd_gen_data(args) -> int:
    r = _resolve(args, _GEN_DATA)
    if not r["out"]:
        raise ConfigError("an output path is required (--out)")
    _check_out(r["out"])
    ds = synth_blobs(r["n"], r["dim"], r["classes"], r["spread"], r["seed"])
    fileio.save_dataset(ds, r["out"])
    print(f"wrote {ds.count} samples (dim {ds.dim}, {ds.classes} classes) to {r['out']}")
    return 0


_TRAIN: Spec = (
    ("data", str, None, "training dataset path"),
    ("test_data", str, None, "optional held-out dataset for the final accuracy line"),
    ("dims", parse_dims, (16, 64, 64, 2), "layer sizes, e.g. 16,64,64,2"),
    ("init_seed", int, 0, "weight initialization seed"),
    ("epochs", int, 10, "training epochs"),
    ("batch_size", int, 64, "minibatch size"),
    ("lr", parse_eps, 0.1, "learning rate"),
    ("momentum", parse_eps, 0.0, "SGD momentum in [0, 1)"),
    ("seed", int, 0, "batch-shuffle seed"),
    ("eval_cap", int, 128, "per-epoch evaluation subset size"),
    ("adv_eps", parse_eps, 0.0, "training attack radius; 0 trains on clean batches"),
    ("adv_alpha", _parse_alpha, None, "training attack step size (required when adv-eps > 0)"),
    ("adv_steps", int, 5, "training attack steps"),
    ("adv_rule", _parse_rule, Rule.SIGN_PGD, "training attack rule: sign, raw, or rgd"),
    ("adv_init", _parse_init, None, "training attack start (default: uniform for sign, zero otherwise)"),
    ("adv_seed", int, 0, "training attack base seed; sample i uses adv-seed XOR i"),
    ("eval_steps", int, 10, "evaluation attack steps (sign rule, same radius)"),
    ("eval_alpha", _parse_alpha, None, "evaluation attack step size (default: radius / 4)"),
    ("clamp", parse_bool, True, "clamp attacked inputs to the [0, 1] box"),
    ("out", str, None, "checkpoint output path"),
    ("curves", str, None, "optional per-epoch CSV output path"),
)


def cmd_train(args) -> int:
    r = _resolve(args, _TRAIN)
    if not r["out"]:
        raise ConfigError("a checkpoint output path is required (--out)")
    _require_inputs(r, ("data",))
    if r["test_data"] is not None:
        _require_inputs(r, ("test_data",))
    _check_out(r["out"])
    if r["curves"]:
        _check_out(r["curves"])
    ds = _load_dataset(r)
    adversarial = None
    eval_attack = None
    if r["adv_eps"] > 0.0:
        if r["adv_alpha"] is None:
            raise ConfigError("adv-eps > 0 requires a training step size (--adv-alpha)")
        clamp = (0.0, 1.0) if r["clamp"] else None
        adversarial = AttackConfig(
            eps=r["adv_eps"],
            alpha=r["adv_alpha"],
            steps=r["adv_steps"],
            rule=r["adv_rule"],
            init=r["adv_init"] or _default_init(r["adv_rule"]),
            domain_clamp=clamp,
            seed=r["adv_seed"],
        )
        eval_attack = AttackConfig(
            eps=r["adv_eps"],
            alpha=r["eval_alpha"] if r["eval_alpha"] is not None else r["adv_eps"] / 4.0,
            steps=r["eval_steps"],
            rule=Rule.SIGN_PGD,
            init=Init.UNIFORM,
            domain_clamp=clamp,
            seed=r["adv_seed"],
        )
    model = MlpModel.random(r["dims"], r["init_seed"])
    _check_compat(model, ds, r["data"])
    cfg = TrainConfig(
        epochs=r["epochs"],
        batch_size=r["batch_size"],
        lr=r["lr"],
        momentum=r["momentum"],
        adversarial=adversarial,
        eval_attack=eval_attack,
        seed=r["seed"],
        eval_cap=r["eval_cap"],
    )
    if adversarial is not None:
        result = train_adversarial(model, ds, cfg)
    else:
        result = train_standard(model, ds, cfg)
    fileio.save_model(result.model, r["out"])
    seeds = (r["init_seed"], r["seed"], r["adv_seed"])
    if r["curves"]:
        with open(r["curves"], "w", encoding="utf-8", newline="") as fh:
            export_curves(result.curves, fh, meta=provenance("train", r, seeds))
    final_ds = ds
    if r["test_data"] is not None:
        final_ds = fileio.load_dataset(r["test_data"])
        _check_compat(result.model, final_ds, r["test_data"])
    report = evaluate(result.model, final_ds, attack=eval_attack)
    mode = "adversarial" if adversarial is not None else "standard"
    print(f"{mode} training done: epochs={cfg.epochs} final_loss={result.curves[-1].train_loss!r}")
    print(f"Clean | Robust: {report.clean_accuracy!r} | {report.robust_accuracy!r}")
    print(f"wrote checkpoint to {r['out']}")
    return 0


_ATTACK: Spec = (
    ("data", str, None, "dataset path"),
    ("model", str, None, "model checkpoint path"),
    ("rules", _parse_rules, _ALL_RULES, "comma list of update rules to compare"),
    ("eps", parse_eps, None, "radius (float or fraction like 8/255); 0 means no perturbation"),
    ("steps", int, 7, "number of updates"),
    ("alpha", _parse_alpha, None, "step size for every rule without a per-rule override"),
    ("alpha_sign", _parse_alpha, None, "step size for the sign rule"),
    ("alpha_raw", _parse_alpha, None, "step size for the raw rule"),
    ("alpha_rgd", _parse_alpha, None, "step size for the rgd rule"),
    ("init", _parse_init, None, "start point override (default: uniform for sign, zero otherwise)"),
    ("seeds", _parse_seeds, (0, 1, 2, 3, 4), "run count N (seeds 0..N-1) or explicit comma list"),
    ("subset", int, None, "per-run random evaluation subset size"),
    ("subset_seed", int, 0, "base seed for the per-run subset draws"),
    ("clamp", parse_bool, True, "clamp adversarial inputs to the [0, 1] box"),
    ("out", str, None, "per-step metrics CSV (mean over runs)"),
    ("summary", str, None, "per-step mean/std summary CSV"),
)

SUMMARY_HEADER = [
    "algorithm",
    "step",
    "robust_acc_mean",
    "robust_acc_std",
    "boundary_mean",
    "boundary_std",
    "change_mean",
    "change_std",
]


def cmd_attack(args) -> int:
    r = _resolve(args, _ATTACK)
    _require_inputs(r, ("data", "model"))
    if r["eps"] is None:
        raise ConfigError("a radius is required (--eps); 0 runs the null attack")
    for key in ("out", "summary"):
        if r[key]:
            _check_out(r[key])
    model = _load_mlp(r["model"])
    ds = _load_dataset(r)
    _check_compat(model, ds, r["model"])
    rules = r["rules"]
    alphas = _rule_alphas(r, rules)
    seed_list = r["seeds"]
    steps = r["steps"]
    if r["subset"] is not None and not 1 <= r["subset"] <= ds.count:
        raise ConfigError(f"subset must lie in [1, {ds.count}], got {r['subset']}")

    pooled_rows = []
    summary_rows = []
    for rule in rules:
        acc = np.empty((len(seed_list), steps + 1))
        boundary = np.empty((len(seed_list), steps + 1))
        change = np.empty((len(seed_list), steps))
        clean = np.empty(len(seed_list))
        for k, run_seed in enumerate(seed_list):
            xs, ys = ds.inputs.array, ds.labels
            if r["subset"] is not None and r["subset"] < ds.count:
                idx = np.random.default_rng((r["subset_seed"], run_seed)).choice(
                    ds.count, size=r["subset"], replace=False
                )
                xs, ys = xs[idx], ys[idx]
            cfg = _attack_for(rule, alphas[rule], r, run_seed, steps)
            results = attack_dataset(model, xs, ys, LossKind.CROSS_ENTROPY, cfg)
            acc[k], boundary[k], change[k] = _per_step_series(model, xs, ys, results, steps, r["clamp"])
            preds = predict_labels(model, xs)
            clean[k] = float(np.count_nonzero(preds == ys)) / len(ys)
        for t in range(steps + 1):
            pooled_rows.append(
                {
                    "algorithm": rule.value,
                    "step": t,
                    "robust_accuracy": float(acc[:, t].mean()),
                    "boundary_ratio": float(boundary[:, t].mean()),
                    "mean_change": float(change[:, t - 1].mean()) if t > 0 else 0.0,
                }
            )
        for t in range(1, steps + 1):
            summary_rows.append(
                [
                    rule.value,
                    t,
                    repr(float(acc[:, t].mean())),
                    repr(float(acc[:, t].std())),
                    repr(float(boundary[:, t].mean())),
                    repr(float(boundary[:, t].std())),
                    repr(float(change[:, t - 1].mean())),
                    repr(float(change[:, t - 1].std())),
                ]
            )
        print(
            f"rule={rule.value} clean={float(clean.mean())!r} "
            f"robust_mean={float(acc[:, steps].mean())!r} robust_std={float(acc[:, steps].std())!r} "
            f"runs={len(seed_list)}"
        )
    meta = provenance("attack", r, seed_list)
    if r["out"]:
        with open(r["out"], "w", encoding="utf-8", newline="") as fh:
            metrics.export_report(pooled_rows, fh, meta=meta)
    if r["summary"]:
        with open(r["summary"], "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {meta}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_HEADER)
            w.writerows(summary_rows)
    return 0


_SWEEP: Spec = (
    ("data", str, None, "dataset path"),
    ("model", str, None, "model checkpoint path"),
    ("rules", _parse_rules, _ALL_RULES, "comma list of update rules to sweep"),
    ("inits", _parse_inits, (Init.UNIFORM, Init.ZERO), "comma list of start points to column-compare"),
    ("eps", parse_eps, None, "radius (float or fraction); must be > 0"),
    ("steps", int, 7, "number of updates"),
    ("grid", parse_float_list, None, "step sizes to try (default: a per-rule grid)"),
    ("limit", int, None, "sweep on the first N samples"),
    ("attack_seed", int, 0, "base attack seed; sample i uses attack-seed XOR i"),
    ("clamp", parse_bool, True, "clamp adversarial inputs to the [0, 1] box"),
    ("out", str, None, "grid table CSV output path"),
)

_SIGN_GRID_SCALE = (2.0, 1.5, 1.0, 0.8, 0.5, 0.25, 0.2)
_RAW_GRID = (1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0, 3000.0, 10000.0, 30000.0)


def _default_grid(rule: Rule, eps: float) -> tuple[float, ...]:
    if rule is Rule.SIGN_PGD:
        return tuple(scale * eps for scale in _SIGN_GRID_SCALE)
    return _RAW_GRID


def cmd_sweep(args) -> int:
    r = _resolve(args, _SWEEP)
    _require_inputs(r, ("data", "model"))
    if r["eps"] is None or r["eps"] <= 0:
        raise ConfigError("the sweep command needs eps > 0")
    if r["out"]:
        _check_out(r["out"])
    model = _load_mlp(r["model"])
    ds = _load_dataset(r)
    _check_compat(model, ds, r["model"])
    inits = r["inits"]
    rows = []
    for rule in r["rules"]:
        grid = r["grid"] if r["grid"] is not None else _default_grid(rule, r["eps"])
        cells = {}
        best = {}
        for init in inits:
            cfg = AttackConfig(
                eps=r["eps"],
                alpha=grid[0],
                steps=r["steps"],
                rule=rule,
                init=init,
                domain_clamp=(0.0, 1.0) if r["clamp"] else None,
                seed=r["attack_seed"],
            )
            best_alpha, table = grid_search_alpha(
                model, ds.inputs.array, ds.labels, LossKind.CROSS_ENTROPY, cfg, grid
            )
            cells[init] = table
            best[init] = best_alpha
            best_acc = min(acc for _, acc in table)
            print(f"rule={rule.value} init={init.value} best_alpha={best_alpha!r} robust={best_acc!r}")
        for j, alpha in enumerate(grid):
            row = [rule.value, repr(float(alpha))]
            for init in inits:
                row.append(repr(float(cells[init][j][1])))
                row.append("1" if alpha == best[init] else "0")
            rows.append(row)
    if r["out"]:
        header = ["rule", "alpha"]
        for init in inits:
            header += [f"robust_acc_{init.value}", f"best_{init.value}"]
        with open(r["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {provenance('sweep', r, (r['attack_seed'],))}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    return 0


_THEOREM: Spec = (
    ("n", int, 10000, "number of random instances"),
    ("seed", int, 0, "campaign seed"),
    ("max_failures", int, 10, "reproducers to keep"),
    ("repro_dir", str, None, "directory for per-violation reproducer files"),
)


def cmd_theorem(args) -> int:
    r = _resolve(args, _THEOREM)
    report = theory.run_fuzz(
        r["n"], seed=r["seed"], max_failures=r["max_failures"], reproducer_dir=r["repro_dir"]
    )
    print(f"instances: {report.instances}  checks: {report.checks}  violations: {report.violations}")
    print(
        f"worst_rel_excess: {report.worst_rel_excess!r} "
        f"at instance {report.worst_index} check {report.worst_check}"
    )
    if report.clean:
        print("all bounds hold")
        return 0
    for failure in report.failures:
        print(theory.format_reproducer(failure), file=sys.stderr)
    return 3


_TRANSFER: Spec = (
    ("data", str, None, "dataset path"),
    ("source", str, None, "checkpoint the attacks are crafted against"),
    ("targets", _parse_paths, None, "comma list of checkpoints to evaluate"),
    ("rules", _parse_rules, _ALL_RULES, "comma list of update rules"),
    ("eps", parse_eps, None, "radius (float or fraction); 0 means no perturbation"),
    ("steps", int, 10, "number of updates"),
    ("alpha", _parse_alpha, None, "step size for every rule without a per-rule override"),
    ("alpha_sign", _parse_alpha, None, "step size for the sign rule"),
    ("alpha_raw", _parse_alpha, None, "step size for the raw rule"),
    ("alpha_rgd", _parse_alpha, None, "step size for the rgd rule"),
    ("init", _parse_init, None, "start point override (default: uniform for sign, zero otherwise)"),
    ("attack_seed", int, 0, "base attack seed; sample i uses attack-seed XOR i"),
    ("limit", int, None, "attack only the first N samples"),
    ("clamp", parse_bool, True, "clamp adversarial inputs to the [0, 1] box"),
    ("out", str, None, "transfer table CSV output path"),
)

TRANSFER_HEADER = ["target", "rule", "success_rate"]


def cmd_transfer(args) -> int:
    r = _resolve(args, _TRANSFER)
    _require_inputs(r, ("data", "source", "targets"))
    if r["eps"] is None:
        raise ConfigError("a radius is required (--eps); 0 measures clean error rates")
    if r["out"]:
        _check_out(r["out"])
    source = _load_mlp(r["source"])
    ds = _load_dataset(r)
    _check_compat(source, ds, r["source"])
    targets = []
    source_path = os.path.abspath(r["source"])
    for path in r["targets"]:
        target = _load_mlp(path)
        if target.input_dim != source.input_dim:
            raise ConfigError(
                f"target input dim {target.input_dim} vs source {source.input_dim} ({path})"
            )
        _check_compat(target, ds, path)
        label = "source" if os.path.abspath(path) == source_path else path
        targets.append((label, target))
    rules = r["rules"]
    alphas = _rule_alphas(r, rules)
    crafted = {}
    for rule in rules:
        cfg = _attack_for(rule, alphas[rule], r, r["attack_seed"], r["steps"])
        results = attack_dataset(source, ds.inputs.array, ds.labels, LossKind.CROSS_ENTROPY, cfg)
        crafted[rule] = np.stack([res.x_adv.array for res in results])
    rows = []
    for label, target in targets:
        for rule in rules:
            preds = predict_labels(target, crafted[rule])
            success = float(np.count_nonzero(preds != ds.labels)) / ds.count
            rows.append([label, rule.value, repr(success)])
            print(f"target={label} rule={rule.value} success_rate={success!r}")
    if r["out"]:
        with open(r["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {provenance('transfer', r, (r['attack_seed'],))}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRANSFER_HEADER)
            w.writerows(rows)
    return 0


_REPORT: Spec = (
    ("data", str, None, "dataset path"),
    ("model", str, None, "model checkpoint path"),
    ("rules", _parse_rules, _ALL_RULES, "comma list of update rules"),
    ("eps", parse_eps, None, "radius (float or fraction); must be > 0"),
    ("steps", int, 7, "number of updates"),
    ("alpha", _parse_alpha, None, "step size for every rule without a per-rule override"),
    ("alpha_sign", _parse_alpha, None, "step size for the sign rule"),
    ("alpha_raw", _parse_alpha, None, "step size for the raw rule"),
    ("alpha_rgd", _parse_alpha, None, "step size for the rgd rule"),
    ("init", _parse_init, None, "start point override (default: uniform for sign, zero otherwise)"),
    ("attack_seed", int, 0, "base attack seed; sample i uses attack-seed XOR i"),
    ("limit", int, None, "report on the first N samples"),
    ("clamp", parse_bool, True, "clamp adversarial inputs to the [0, 1] box"),
    ("out", str, None, "per-step metrics CSV output path"),
    ("hist_out", str, None, "prefix for per-rule perturbation histogram CSVs"),
    ("hist_steps", _parse_steps_list, None, "steps to histogram (default: final step)"),
    ("bins", int, 50, "histogram bin count"),
)


def cmd_report(args) -> int:
    r = _resolve(args, _REPORT)
    _require_inputs(r, ("data", "model"))
    if r["eps"] is None or r["eps"] <= 0:
        raise ConfigError("the report command needs eps > 0")
    if not r["out"]:
        raise ConfigError("a metrics CSV path is required (--out)")
    _check_out(r["out"])
    if r["hist_out"]:
        _check_out(r["hist_out"])
    model = _load_mlp(r["model"])
    ds = _load_dataset(r)
    _check_compat(model, ds, r["model"])
    rules = r["rules"]
    alphas = _rule_alphas(r, rules)
    steps = r["steps"]
    hist_steps = r["hist_steps"] if r["hist_steps"] is not None else (steps,)
    for t in hist_steps:
        if not 0 <= t <= steps:
            raise ConfigError(f"histogram step {t} outside [0, {steps}]")
    meta = provenance("report", r, (r["attack_seed"],))
    rows = []
    hists = []
    for rule in rules:
        cfg = _attack_for(rule, alphas[rule], r, r["attack_seed"], steps)
        results = attack_dataset(model, ds.inputs.array, ds.labels, LossKind.CROSS_ENTROPY, cfg)
        acc, boundary, changes = _per_step_series(
            model, ds.inputs.array, ds.labels, results, steps, r["clamp"]
        )
        for t in range(steps + 1):
            rows.append(
                {
                    "algorithm": rule.value,
                    "step": t,
                    "robust_accuracy": acc[t],
                    "boundary_ratio": boundary[t],
                    "mean_change": changes[t - 1] if t > 0 else 0.0,
                }
            )
        if r["hist_out"]:
            spec = metrics.HistogramSpec(eps=r["eps"], bin_count=r["bins"])
            entries = []
            for t in hist_steps:
                pooled = np.stack([res.trace[t].delta_clipped.array for res in results])
                counts, edges = metrics.perturbation_histogram(pooled, spec)
                entries.append((t, counts, edges))
            hists.append((rule, entries))
    with open(r["out"], "w", encoding="utf-8", newline="") as fh:
        metrics.export_report(rows, fh, meta=meta)
    for rule, entries in hists:
        path = f"{r['hist_out']}{rule.value}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            metrics.export_histogram(entries, fh, meta=meta)
    print(f"wrote {len(rows)} rows to {r['out']}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rgdkit", description="L-infinity attack toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec, func, help_text in (
        ("gen-data", _GEN_DATA, cmd_gen_data, "generate a blob dataset"),
        ("train", _TRAIN, cmd_train, "train an MLP, optionally adversarially"),
        ("attack", _ATTACK, cmd_attack, "compare rules over a seed list"),
        ("sweep", _SWEEP, cmd_sweep, "step-size grid search per (rule, init)"),
        ("theorem", _THEOREM, cmd_theorem, "audit the step-gain bound on random instances"),
        ("transfer", _TRANSFER, cmd_transfer, "cross-model attack success rates"),
        ("report", _REPORT, cmd_report, "per-step plot data with histograms"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_spec(p, spec)
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ToolkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
