"""Pinhole backprojection and least-squares surface normals.

Each local plane is modelled as ``D s = 1`` where the rows of ``D`` are the
neighbourhood's 3-D points; the normal is the normalised solution of the
(ridge-stabilised) normal equations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import CameraIntrinsics, as_depth_map
from .errors import DegenerateGeometryError, DomainError, InsufficientDataError

# Smallest admissible eigenvalue of D^T D relative to its largest before the
# neighbourhood counts as rank deficient (collinear points, planes through the
# camera centre).
RCOND = 1e-10


@dataclass(frozen=True)
class PlaneFitConfig:
    window: int = 5
    min_points: int = 3
    ridge: float = 1e-9

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise DomainError("window must be odd >= 3")
        if self.min_points < 3:
            raise DomainError("min_points must be >= 3")
        if self.ridge < 0:
            raise DomainError("ridge must be non-negative")


@dataclass
class PointCloud:
    points: np.ndarray  # (N, 3)
    pixel_index: np.ndarray  # (N, 2) as (row, col)

    def __len__(self):
        return len(self.points)


@dataclass
class NormalMap:
    normals: np.ndarray  # (H, W, 3); zero where invalid
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64)
        if self.normals.ndim != 3 or self.normals.shape[2] != 3:
            raise DomainError(f"normals must have shape (H, W, 3), got {self.normals.shape}")
        if self.valid is None:
            self.valid = np.linalg.norm(self.normals, axis=2) > 0
        self.valid = np.asarray(self.valid, dtype=bool)

    @property
    def shape(self):
        return self.normals.shape[:2]


def pixel_rays(shape, cam: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ``(x/z, y/z)`` factors of the pinhole model."""
    h, w = shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    return (cols - cam.ox) / cam.fx, (rows - cam.oy) / cam.fy


def backproject_grid(depth: np.ndarray, cam: CameraIntrinsics) -> np.ndarray:
    """(H, W, 3) point grid; invalid pixels map to the origin."""
    depth = as_depth_map(depth)
    rx, ry = pixel_rays(depth.shape, cam)
    return np.stack([depth * rx, depth * ry, depth], axis=-1)


def backproject(depth: np.ndarray, cam: CameraIntrinsics) -> PointCloud:
    depth = as_depth_map(depth)
    grid = backproject_grid(depth, cam)
    rows, cols = np.nonzero(depth > 0)
    return PointCloud(points=grid[rows, cols], pixel_index=np.stack([rows, cols], axis=1))


def _solve_planes(gram: np.ndarray, rhs: np.ndarray, ridge: float):
    """Batched normal-equation solve.

    ``gram`` is (..., 3, 3) holding D^T D, ``rhs`` is (..., 3) holding D^T 1.
    Returns camera-facing unit normals and a boolean "well-posed" flag.
    """
    eig = np.linalg.eigvalsh(gram)
    ok = (eig[..., -1] > 0) & (eig[..., 0] > RCOND * eig[..., -1])
    system = gram + ridge * np.eye(3)
    safe = np.where(ok[..., None, None], system, np.eye(3))
    s = np.linalg.solve(safe, rhs[..., None])[..., 0]
    norm = np.linalg.norm(s, axis=-1)
    ok &= norm > 0
    n = s / np.where(ok, norm, 1.0)[..., None]
    # D s = 1 puts s on the far side of the plane; the centroid direction
    # (proportional to rhs) is the viewing ray, so face the camera.
    facing = np.sum(n * rhs, axis=-1) > 0
    n = np.where(facing[..., None], -n, n)
    n[~ok] = 0.0
    return n, ok


def fit_normal(neighbors, cfg: PlaneFitConfig = PlaneFitConfig()) -> np.ndarray:
    """Unit normal of the least-squares plane through ``neighbors`` (M x 3)."""
    pts = np.asarray(neighbors, dtype=np.float64).reshape(-1, 3)
    if len(pts) < cfg.min_points:
        raise InsufficientDataError(f"need at least {cfg.min_points} points, got {len(pts)}")
    n, ok = _solve_planes(pts.T @ pts, pts.sum(axis=0), cfg.ridge)
    if not ok:
        raise DegenerateGeometryError("neighbourhood does not span a plane off the camera centre")
    return n


def normals_from_depth(depth: np.ndarray, cam: CameraIntrinsics,
                       cfg: PlaneFitConfig = PlaneFitConfig()) -> NormalMap:
    """Fit a plane around every valid pixel.

    Neighbourhood sums are gathered with box filters (windows clipped at the
    image border, invalid pixels contribute nothing), so the cost is a handful
    of filters plus one batched 3x3 solve.
    """
    depth = as_depth_map(depth)
    valid = depth > 0
    pts = backproject_grid(depth, cam) * valid[..., None]
    box = np.ones((cfg.window, cfg.window))

    def wsum(a):
        return ndimage.correlate(a, box, mode="constant", cval=0.0)

    count = np.rint(wsum(valid.astype(np.float64)))
    rhs = np.stack([wsum(pts[..., i]) for i in range(3)], axis=-1)
    gram = np.empty(depth.shape + (3, 3))
    for i in range(3):
        for j in range(i, 3):
            gram[..., i, j] = gram[..., j, i] = wsum(pts[..., i] * pts[..., j])

    candidates = valid & (count >= cfg.min_points)
    normals = np.zeros(depth.shape + (3,))
    out_valid = np.zeros(depth.shape, dtype=bool)
    if candidates.any():
        n, ok = _solve_planes(gram[candidates], rhs[candidates], cfg.ridge)
        normals[candidates] = n
        out_valid[candidates] = ok
    return NormalMap(normals=normals, valid=out_valid)
