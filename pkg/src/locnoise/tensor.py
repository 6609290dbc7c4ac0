"""Dense float32 image tensors and the small set of array ops built on them.

A Tensor is an immutable H x W x C array of 32-bit floats in row-major
(h, w, c) order, matching how image files are laid out on disk. Everything
heavier (convolutions, attacks, metrics) works on these.

Reductions accumulate in float64 and round to float32 once at the boundary,
which keeps metric sums stable on large images.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedFileError

LTNS_MAGIC = b"LTNS"

_REDUCE_KINDS = ("sum", "min", "max", "mean")


class Tensor:
    """Immutable H x W x C float32 array with all-finite values."""

    __slots__ = ("_arr",)

    def __init__(self, values, copy: bool = True):
        arr = np.array(values, dtype=np.float32, copy=copy)
        if arr.ndim != 3:
            raise ValueError(f"tensor must be 3-D (H, W, C), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite (no NaN/Inf)")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._arr = arr

    @classmethod
    def zeros(cls, shape: tuple[int, int, int]) -> "Tensor":
        return cls(np.zeros(shape, dtype=np.float32), copy=False)

    @classmethod
    def full(cls, shape: tuple[int, int, int], value: float) -> "Tensor":
        return cls(np.full(shape, value, dtype=np.float32), copy=False)

    @property
    def data(self) -> np.ndarray:
        """Read-only (H, W, C) float32 view; .ravel() gives the flat row-major data."""
        return self._arr

    @property
    def shape(self) -> tuple[int, int, int]:
        return self._arr.shape  # type: ignore[return-value]

    @property
    def height(self) -> int:
        return self._arr.shape[0]

    @property
    def width(self) -> int:
        return self._arr.shape[1]

    @property
    def channels(self) -> int:
        return self._arr.shape[2]

    @property
    def size(self) -> int:
        return self._arr.size

    def __repr__(self) -> str:
        h, w, c = self.shape
        return f"Tensor({h}x{w}x{c})"


def elementwise_sign(t: Tensor) -> Tensor:
    """Per-element sign: -1, 0, or +1 (sign(0) = 0)."""
    return Tensor(np.sign(t.data), copy=False)


def clamp(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clip every element into [lo, hi]; in-range elements pass through unchanged."""
    if lo > hi:
        raise ValueError(f"clamp bounds out of order: lo={lo} > hi={hi}")
    return Tensor(np.clip(t.data, np.float32(lo), np.float32(hi)), copy=False)


def reduce(t: Tensor, kind: str) -> float:
    """Reduce to a scalar: sum, min, max, or mean (accumulated in float64)."""
    if kind not in _REDUCE_KINDS:
        raise ValueError(f"unknown reduce kind {kind!r}, expected one of {_REDUCE_KINDS}")
    if t.size == 0:
        raise ValueError("cannot reduce an empty tensor")
    a = t.data.astype(np.float64)
    if kind == "sum":
        acc = a.sum()
    elif kind == "min":
        acc = a.min()
    elif kind == "max":
        acc = a.max()
    else:
        acc = a.sum() / a.size
    return float(np.float32(acc))


def write_ltns(path: str | Path, t: Tensor) -> None:
    """Write the raw tensor format: magic, three u32-LE dims, float32-LE payload."""
    h, w, c = t.shape
    with open(path, "wb") as f:
        f.write(LTNS_MAGIC)
        f.write(struct.pack("<3I", h, w, c))
        f.write(t.data.astype("<f4").tobytes())


def read_ltns(path: str | Path) -> Tensor:
    """Read a raw tensor file written by write_ltns."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if len(magic) < 4 or magic != LTNS_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {LTNS_MAGIC!r}")
        header = f.read(12)
        if len(header) < 12:
            raise TruncatedFileError(f"{path}: truncated header")
        h, w, c = struct.unpack("<3I", header)
        n = h * w * c
        payload = f.read(4 * n)
        if len(payload) < 4 * n:
            raise TruncatedFileError(
                f"{path}: expected {4 * n} payload bytes, got {len(payload)}"
            )
    arr = np.frombuffer(payload, dtype="<f4", count=n).reshape(h, w, c)
    return Tensor(arr)
