"""Mask-localized white-box adversarial attacks with imperceptibility metrics."""

from .attacks import (
    AttackConfig,
    AttackOutcome,
    cw_localized,
    fgsm_localized,
    pgd_localized,
    project_linf,
    run_attack,
)
from .errors import (
    FormatError,
    LocnoiseError,
    TruncatedFileError,
    UndefinedChangeError,
    ValidationError,
)
from .harness import ExperimentSpec, ReportRow, run_experiment, write_report
from .masks import Mask, apply_mask, build_mask
from .metrics import (
    AggregateRow,
    MetricSet,
    attack_success_rate,
    dynamic_range,
    mean_pixel_value,
    metric_set,
    psnr,
    relative_change,
    ssim,
)
from .net import (
    LayerSpec,
    Network,
    Prediction,
    forward,
    input_gradient,
    load_weights,
    loss,
    save_weights,
    seeded_random_network,
)
from .tensor import Tensor, clamp, elementwise_sign, read_ltns, reduce, write_ltns

__version__ = "0.1.0"

__all__ = [
    "AggregateRow",
    "AttackConfig",
    "AttackOutcome",
    "ExperimentSpec",
    "FormatError",
    "LayerSpec",
    "LocnoiseError",
    "Mask",
    "MetricSet",
    "Network",
    "Prediction",
    "ReportRow",
    "Tensor",
    "TruncatedFileError",
    "UndefinedChangeError",
    "ValidationError",
    "apply_mask",
    "attack_success_rate",
    "build_mask",
    "clamp",
    "cw_localized",
    "dynamic_range",
    "elementwise_sign",
    "fgsm_localized",
    "forward",
    "input_gradient",
    "load_weights",
    "loss",
    "mean_pixel_value",
    "metric_set",
    "pgd_localized",
    "project_linf",
    "psnr",
    "read_ltns",
    "reduce",
    "relative_change",
    "run_attack",
    "run_experiment",
    "save_weights",
    "seeded_random_network",
    "ssim",
    "write_ltns",
    "write_report",
]
