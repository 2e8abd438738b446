"""Validity-aware morphological closing for sparse depth maps.

Dilation takes the maximum over the valid pixels of each k x k window and
leaves a pixel invalid only if its whole window is empty. Erosion keeps a
pixel only when every in-bounds pixel of its window is valid. Because valid
depths are strictly positive and invalid ones are 0, both reduce to plain
grey-level max/min filters whose windows are clipped at the image border.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import as_depth_map
from .errors import DomainError


def _check_kernel(k: int) -> None:
    if k < 3 or k % 2 == 0:
        raise DomainError("kernel must be odd and >= 3")


@dataclass(frozen=True)
class ClosingConfig:
    kernel: int = 3
    iterations: int = 1
    preserve_original: bool = True

    def __post_init__(self):
        _check_kernel(self.kernel)
        if self.iterations < 1:
            raise DomainError("iterations must be >= 1")


@dataclass(frozen=True)
class DensityStats:
    valid_count: int
    valid_fraction: float

    def to_kv(self, prefix: str = "") -> str:
        return (f"{prefix}valid_count={self.valid_count}\n"
                f"{prefix}valid_fraction={self.valid_fraction:.6f}")


# mode="nearest" replicates border pixels, and a replicated pixel is already
# part of the window, so max/min equal the clipped-window reductions.
def dilate(depth: np.ndarray, k: int = 3) -> np.ndarray:
    _check_kernel(k)
    return ndimage.maximum_filter(as_depth_map(depth), size=k, mode="nearest")


def erode(depth: np.ndarray, k: int = 3) -> np.ndarray:
    _check_kernel(k)
    return ndimage.minimum_filter(as_depth_map(depth), size=k, mode="nearest")


def closing(depth: np.ndarray, cfg: ClosingConfig = ClosingConfig()) -> np.ndarray:
    original = as_depth_map(depth)
    out = original
    for _ in range(cfg.iterations):
        out = erode(dilate(out, cfg.kernel), cfg.kernel)
    if cfg.preserve_original:
        out = np.where(original > 0, original, out)
    return out


def density_stats(depth: np.ndarray) -> DensityStats:
    depth = np.asarray(depth)
    count = int(np.count_nonzero(depth > 0))
    return DensityStats(valid_count=count, valid_fraction=count / depth.size)
