"""Centered binary masks that confine noise to a fraction of the image.

The coverage parameter gamma is the requested fraction of active pixels.
The active region is a single axis-aligned rectangle with side lengths
round(sqrt(gamma) * dim), so realized coverage tracks gamma but is only
exactly gamma when the rounding happens to be exact. Masks are 2-D and
broadcast over channels: every channel of an active pixel is perturbable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pnm import write_pgm
from .tensor import Tensor


@dataclass(frozen=True)
class Mask:
    """Binary H x W field; 1 marks pixels eligible for perturbation."""

    bits: np.ndarray
    gamma_requested: float
    coverage_actual: float = field(init=False)

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValueError(f"mask bits must be 2-D, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("mask bits must be 0 or 1")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)
        object.__setattr__(
            self, "coverage_actual", float(int(bits.sum())) / bits.size
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape  # type: ignore[return-value]

    def active(self) -> np.ndarray:
        """Boolean (H, W) view of the active region."""
        return self.bits.astype(bool)


def _side(gamma: float, dim: int) -> int:
    # round half away from zero, clamped into [1, dim]
    s = math.floor(math.sqrt(gamma) * dim + 0.5)
    return max(1, min(dim, s))


def build_mask(height: int, width: int, gamma: float) -> Mask:
    """Centered rectangular mask covering approximately gamma of the pixels.

    Side lengths are round(sqrt(gamma) * dim); when the leftover margin is
    odd the rectangle sits one pixel toward the top/left.
    """
    if height < 1 or width < 1:
        raise ValueError(f"mask dims must be positive, got {height}x{width}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    s_h = _side(gamma, height)
    s_w = _side(gamma, width)
    top = (height - s_h) // 2
    left = (width - s_w) // 2
    bits = np.zeros((height, width), dtype=np.uint8)
    bits[top : top + s_h, left : left + s_w] = 1
    return Mask(bits=bits, gamma_requested=gamma)


def apply_mask(noise: Tensor, mask: Mask) -> Tensor:
    """Zero noise outside the active region; active elements pass through bit-exactly."""
    h, w, _ = noise.shape
    if (h, w) != mask.shape:
        raise ValueError(
            f"noise {h}x{w} does not match mask {mask.shape[0]}x{mask.shape[1]}"
        )
    sel = mask.active()[:, :, None]
    return Tensor(np.where(sel, noise.data, np.float32(0.0)), copy=False)


def dump_mask_pgm(mask: Mask, path: str | Path) -> None:
    """Write the mask as a binary PGM (active pixels white) for eyeballing."""
    write_pgm(path, mask.bits * np.uint8(255))
