"""Grid containers and the validity conventions used across the package.

Depth maps are plain 2-D ``float64`` numpy arrays; 0 marks a pixel without a
measurement. Masks are boolean arrays of the same shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError


def as_depth_map(values) -> np.ndarray:
    """Validate and copy ``values`` into a float64 depth grid."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"depth map must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("depth map contains non-finite values")
    if np.any(arr < 0):
        raise DomainError("depth map contains negative values")
    return arr


def as_gray_image(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"gray image must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError("gray image intensities must lie in [0, 1]")
    return arr


def check_same_shape(*arrays: np.ndarray) -> None:
    shapes = {a.shape[:2] for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"grid shapes differ: {sorted(shapes)}")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters in pixels."""

    fx: float
    fy: float
    ox: float
    oy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        for name in ("fx", "fy", "ox", "oy"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")


@dataclass(frozen=True)
class CropRect:
    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.top < 0 or self.left < 0 or self.height < 1 or self.width < 1:
            raise DimensionError(f"invalid crop rectangle {self}")

    def fits(self, shape) -> bool:
        h, w = shape[:2]
        return self.top + self.height <= h and self.left + self.width <= w

    def compose(self, inner: "CropRect") -> "CropRect":
        """Rectangle equivalent to cropping by ``self`` and then by ``inner``."""
        if not inner.fits((self.height, self.width)):
            raise DimensionError(f"{inner} does not fit inside {self}")
        return CropRect(self.top + inner.top, self.left + inner.left, inner.height, inner.width)

    @classmethod
    def parse(cls, text: str) -> "CropRect":
        """Parse ``"top,left,height,width"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"crop must be 't,l,h,w', got {text!r}")
        return cls(*(int(p) for p in parts))


def validity_mask(depth: np.ndarray) -> np.ndarray:
    return np.asarray(depth) > 0


def apply_cap(pred: np.ndarray, gt: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Evaluation mask: ground truth valid and inside ``(lo, hi]``.

    The cap is applied to the ground truth only; predictions are never
    excluded by their own magnitude.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    check_same_shape(pred, gt)
    if not (0 <= lo < hi):
        raise DomainError(f"cap requires 0 <= lo < hi, got lo={lo}, hi={hi}")
    return (gt > 0) & (gt > lo) & (gt <= hi)


def crop(grid: np.ndarray, rect: CropRect) -> np.ndarray:
    grid = np.asarray(grid)
    if not rect.fits(grid.shape):
        raise DimensionError(f"{rect} lies outside a {grid.shape[0]}x{grid.shape[1]} grid")
    return grid[rect.top:rect.top + rect.height, rect.left:rect.left + rect.width].copy()
