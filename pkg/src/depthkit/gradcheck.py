"""Central finite differences for checking hand-derived gradients."""
from __future__ import annotations

import numpy as np


def central_difference(func, x, rel_step=1e-6, indices=None):
    """Numerical gradient of scalar ``func`` at ``x``.

    The step for entry i is ``rel_step * max(|x_i|, 1)``. ``indices`` restricts
    the evaluation to a subset of flat positions; other entries are left 0.
    """
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    if indices is None:
        indices = range(flat.size)
    for i in indices:
        step = rel_step * max(abs(flat[i]), 1.0)
        orig = flat[i]
        flat[i] = orig + step
        f_plus = func(x)
        flat[i] = orig - step
        f_minus = func(x)
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad.reshape(x.shape)


def relative_error(analytic, numeric, floor=1e-12):
    """max|analytic - numeric| scaled by the larger of the two gradients' max-norms."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)
