"""Sobel gradients, edge thresholding and Gaussian pre-filtering.

Both filters are applied as cross-correlations with edge-replicated borders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import as_gray_image
from .errors import DimensionError, DomainError

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = -SOBEL_X.T


@dataclass(frozen=True)
class EdgeConfig:
    tau: float = 0.25

    def __post_init__(self):
        if not self.tau >= 0:
            raise DomainError("tau must be >= 0")


@dataclass(frozen=True)
class GaussianConfig:
    sigma: float = 1.76
    radius: int | None = None  # defaults to ceil(3 sigma)

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("sigma must be positive")
        if self.radius is None:
            object.__setattr__(self, "radius", int(math.ceil(3 * self.sigma)))
        if self.radius < 1:
            raise DomainError("radius must be >= 1")


@dataclass
class GradientField:
    ix: np.ndarray
    iy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray


def gradient_direction(ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """arctan(iy / ix) folded into (-pi/2, pi/2].

    A vertical gradient (ix == 0, iy != 0) maps to pi/2; a zero gradient to 0.
    """
    psi = np.arctan2(iy, ix)
    psi = np.where(psi > np.pi / 2, psi - np.pi, psi)
    return np.where(psi <= -np.pi / 2, psi + np.pi, psi)


def sobel(gray: np.ndarray) -> GradientField:
    """Sobel gradients as unflipped cross-correlation with SOBEL_X / SOBEL_Y.

    Evaluated in separable form (difference first, then 1-2-1 smoothing) so
    flat regions give exact zeros.
    """
    gray = as_gray_image(gray)
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise DimensionError("sobel needs an image of at least 3x3 pixels")
    p = np.pad(gray, 1, mode="edge")
    dx = p[:, 2:] - p[:, :-2]
    ix = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    dy = p[:-2, :] - p[2:, :]
    iy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return GradientField(ix=ix, iy=iy, magnitude=np.hypot(ix, iy),
                         direction=gradient_direction(ix, iy))


def edge_mask(field: GradientField, cfg: EdgeConfig = EdgeConfig()) -> np.ndarray:
    return field.magnitude > cfg.tau


def gaussian_kernel(cfg: GaussianConfig = GaussianConfig()) -> np.ndarray:
    r = cfg.radius
    m, n = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    g = np.exp(-(m ** 2 + n ** 2) / (2.0 * cfg.sigma ** 2))
    return g / g.sum()


def gaussian_blur(gray: np.ndarray, cfg: GaussianConfig = GaussianConfig()) -> np.ndarray:
    gray = as_gray_image(gray)
    out = ndimage.correlate(gray, gaussian_kernel(cfg), mode="nearest")
    return np.clip(out, 0.0, 1.0)
