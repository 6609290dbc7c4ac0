"""Minimal binary PGM/PPM writers for mask and image dumps."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    """Write a 2-D uint8 array as binary PGM (P5)."""
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    if gray.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {gray.shape}")
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"PPM needs an (H, W, 3) array, got shape {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Map floats in [0, 1] to uint8 with round-to-nearest."""
    return np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
