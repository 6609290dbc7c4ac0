"""Imperceptibility and effectiveness metrics for attack outcomes.

Per-image metrics:
  MPV   mean absolute noise over the full H*W*C grid (not just the mask)
  PSNR  10 * log10(1 / MSE(x, x_adv)) in dB for [0, 1] images, capped at
        100 dB (identical images report the cap)
  SSIM  ((2 mu_x mu_y + C1)(2 cov + C2)) / ((mu_x^2 + mu_y^2 + C1)
        (var_x + var_y + C2)) with global per-channel statistics,
        C1 = 0.01^2 and C2 = 0.03^2 for the unit dynamic range, averaged
        over channels
  DR    max - min of the noise over the mask's active region

Across images, ASR is the success fraction and relative_change expresses a
value as a percent change against a baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .attacks import AttackOutcome
from .errors import UndefinedChangeError
from .masks import Mask
from .tensor import Tensor

PSNR_CAP_DB = 100.0
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class MetricSet:
    """Per-image imperceptibility numbers for one attack outcome."""

    mpv: float
    psnr_db: float
    ssim: float
    dr: float


@dataclass(frozen=True)
class AggregateRow:
    """Percent changes of one (method, gamma) cell against the gamma=1 baseline.

    Change fields are None when undefined: no successful attacks to average,
    a zero baseline, or iterations for the single-step method.
    """

    method: str
    gamma: float
    asr: float
    mpv_change_pct: Optional[float] = None
    psnr_change_pct: Optional[float] = None
    ssim_change_pct: Optional[float] = None
    dr_change_pct: Optional[float] = None
    iters_change_pct: Optional[float] = None


def mean_pixel_value(noise: Tensor) -> float:
    """Mean |noise| over every element of the tensor."""
    return float(np.abs(noise.data.astype(np.float64)).sum() / noise.size)


def psnr(x: Tensor, x_adv: Tensor) -> float:
    """Peak signal-to-noise ratio in dB between an image and its perturbed copy."""
    if x.shape != x_adv.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_adv.shape}")
    diff = x.data.astype(np.float64) - x_adv.data.astype(np.float64)
    mse = float((diff * diff).sum() / diff.size)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def ssim(x: Tensor, x_adv: Tensor) -> float:
    """Structural similarity with whole-image statistics, averaged over channels."""
    if x.shape != x_adv.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_adv.shape}")
    a = x.data.astype(np.float64)
    b = x_adv.data.astype(np.float64)
    values = []
    for ch in range(x.channels):
        xa = a[:, :, ch]
        xb = b[:, :, ch]
        mu_x = xa.mean()
        mu_y = xb.mean()
        var_x = ((xa - mu_x) ** 2).mean()
        var_y = ((xb - mu_y) ** 2).mean()
        cov = ((xa - mu_x) * (xb - mu_y)).mean()
        num = (2.0 * mu_x * mu_y + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
        den = (mu_x**2 + mu_y**2 + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
        values.append(num / den)
    return float(np.mean(values))


def dynamic_range(noise: Tensor, mask: Mask) -> float:
    """max - min of the noise values inside the mask's active region."""
    h, w, _ = noise.shape
    if (h, w) != mask.shape:
        raise ValueError(f"noise {h}x{w} does not match mask {mask.shape[0]}x{mask.shape[1]}")
    active = noise.data[mask.active()]
    if active.size == 0:
        raise ValueError("mask has no active pixels")
    vals = active.astype(np.float64)
    return float(vals.max() - vals.min())


def attack_success_rate(outcomes: Sequence[AttackOutcome]) -> float:
    """Fraction of outcomes marked successful."""
    if len(outcomes) == 0:
        raise ValueError("cannot compute a success rate over zero outcomes")
    return sum(1 for o in outcomes if o.success) / len(outcomes)


def relative_change(baseline: float, value: float) -> float:
    """Percent change of value against baseline: 100 * (value - baseline) / baseline."""
    if baseline == 0:
        raise UndefinedChangeError("relative change against a zero baseline is undefined")
    return 100.0 * (value - baseline) / baseline


def metric_set(x: Tensor, outcome: AttackOutcome, mask: Mask) -> MetricSet:
    """All per-image metrics for one outcome against its clean image."""
    return MetricSet(
        mpv=mean_pixel_value(outcome.noise),
        psnr_db=psnr(x, outcome.adversarial_image),
        ssim=ssim(x, outcome.adversarial_image),
        dr=dynamic_range(outcome.noise, mask),
    )
