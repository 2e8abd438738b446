"""Sparse-sensor simulation by per-pixel categorical (k=2, n=1) draws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_depth_map
from .errors import CapacityError, DomainError

GENERATOR = f"numpy.random.PCG64/numpy-{np.__version__}"


@dataclass(frozen=True)
class SamplerConfig:
    desired: int
    seed: int = 0

    def __post_init__(self):
        if self.desired < 0:
            raise DomainError("desired sample count must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")


def keep_probability(desired: int, available: int) -> float:
    if desired > available:
        raise CapacityError(f"asked for {desired} samples but only {available} valid pixels exist")
    return 1.0 if available == 0 else desired / available


def sample_sparse(gt: np.ndarray, cfg: SamplerConfig) -> np.ndarray:
    """Keep each valid pixel independently with probability desired / valid_count.

    One uniform draw per valid pixel, in row-major order, from a PCG64
    generator seeded with ``cfg.seed``. The kept count is binomial with mean
    ``cfg.desired``.
    """
    gt = as_depth_map(gt)
    valid = gt > 0
    p = keep_probability(cfg.desired, int(valid.sum()))
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    draws = rng.random(int(valid.sum()))
    keep = np.zeros_like(valid)
    keep[valid] = draws < p
    return np.where(keep, gt, 0.0)
