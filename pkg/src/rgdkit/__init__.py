"""Toolkit for L-infinity-bounded adversarial attacks and their analysis.

The package covers the full loop: deterministic tensor primitives, exact
model gradients, three attack update rules (signed steps, raw-gradient
steps, and a hidden-variable raw-gradient rule), a numerical audit of the
one-step loss-gain bound, attack metrics, dataset handling, adversarial
training, and a reproducible CLI.
"""

__version__ = "0.1.0"

from .attack import (
    AttackConfig,
    AttackResult,
    Init,
    Rule,
    StepTrace,
    attack_dataset,
    craft_batch,
    grid_search_alpha,
    init_delta,
    project_eps,
    run_attack,
    sign_of,
    step_raw_pgd,
    step_rgd,
    step_sign_pgd,
)
from .data import Dataset, parse_idx, read_idx, save_idx, split, subset, synth_blobs, write_idx
from .errors import (
    ConfigError,
    DataFormatError,
    DimensionError,
    NumericalError,
    ToolkitError,
)
from .fileio import load_dataset, load_model, save_dataset, save_model
from .metrics import (
    HistogramSpec,
    adversarial_gain_series,
    boundary_ratio,
    mean_step_change,
    perturbation_histogram,
    robust_accuracy,
)
from .models import (
    LossKind,
    MlpModel,
    TheoryModel,
    cross_entropy,
    forward_mlp,
    forward_theory,
    grad_input,
    grad_params,
    loss_theory,
    predict_labels,
)
from .tensor import Tensor, matmul, reduce, serial_matmul, serial_sum, tensor, zeros
from .theory import (
    BoundReport,
    FuzzReport,
    SignSplit,
    lemma1_check,
    lemma2_check,
    run_fuzz,
    sign_split,
    step_gain_series,
    theorem1_check,
)
from .train import (
    EvalReport,
    TrainConfig,
    TrainResult,
    evaluate,
    train_adversarial,
    train_standard,
)
