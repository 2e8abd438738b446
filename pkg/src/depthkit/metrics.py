"""Depth and surface-normal evaluation metrics."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import check_same_shape
from .errors import DomainError, EmptyMaskError

DELTA_BASE = 1.25
NORMAL_THRESHOLDS_DEG = (11.25, 22.5, 30.0)


class _Report:
    def as_dict(self) -> dict:
        return asdict(self)

    def to_kv(self) -> str:
        return "\n".join(f"{k}={_fmt(v)}" for k, v in self.as_dict().items())

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def mean_of(cls, reports):
        """Average per-image reports field by field (not pooled over pixels)."""
        reports = list(reports)
        if not reports:
            raise EmptyMaskError("no reports to aggregate")
        out = {}
        for name in cls.field_names():
            vals = [getattr(r, name) for r in reports]
            out[name] = int(sum(vals)) if name == "n_pixels" else float(np.mean(vals))
        return cls(**out)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass(frozen=True)
class DepthMetricsReport(_Report):
    silog: float
    delta1: float
    delta2: float
    delta3: float
    abs_rel: float
    sqr_rel: float
    log10: float
    mae: float
    rmse: float
    rmse_log: float
    imae: float
    irmse: float
    imae_literal: float
    irmse_literal: float
    n_pixels: int


@dataclass(frozen=True)
class NormalsMetricsReport(_Report):
    mean_deg: float
    median_deg: float
    rmse_deg: float
    acc_11_25: float
    acc_22_5: float
    acc_30: float
    n_pixels: int


def _inv(x):
    return math.inf if x == 0 else 1.0 / x


def depth_metrics(pred, gt, mask, inverse_scale: float = 1000.0) -> DepthMetricsReport:
    """Standard single-image depth metrics over ``mask``.

    ``imae``/``irmse`` compare inverse depths multiplied by ``inverse_scale``
    (1000 turns 1/m into 1/km, the KITTI benchmark unit). ``imae_literal`` and
    ``irmse_literal`` are simply 1/mae and 1/rmse.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(pred, gt, mask)
    if not mask.any():
        raise EmptyMaskError("no pixels to evaluate")
    y, t = pred[mask], gt[mask]
    if np.any(y <= 0) or np.any(t <= 0) or not np.all(np.isfinite(y)):
        raise DomainError("metrics need positive, finite depths under the mask")
    n = y.size
    diff = y - t
    dlog = np.log(y) - np.log(t)
    ratio = np.maximum(y / t, t / y)
    inv_diff = inverse_scale * (1.0 / y - 1.0 / t)
    mae = float(np.mean(np.abs(diff)))
    rmse = math.sqrt(float(np.mean(diff ** 2)))
    return DepthMetricsReport(
        silog=float(np.mean(dlog ** 2) - 0.5 * np.mean(dlog) ** 2),
        delta1=float(np.mean(ratio < DELTA_BASE)),
        delta2=float(np.mean(ratio < DELTA_BASE ** 2)),
        delta3=float(np.mean(ratio < DELTA_BASE ** 3)),
        abs_rel=float(np.mean(np.abs(diff) / t)),
        sqr_rel=float(np.mean(diff ** 2 / t)),
        log10=float(np.mean(np.abs(np.log10(y) - np.log10(t)))),
        mae=mae,
        rmse=rmse,
        rmse_log=math.sqrt(float(np.mean(dlog ** 2))),
        imae=float(np.mean(np.abs(inv_diff))),
        irmse=math.sqrt(float(np.mean(inv_diff ** 2))),
        imae_literal=_inv(mae),
        irmse_literal=_inv(rmse),
        n_pixels=n,
    )


def angular_errors_deg(pred, gt, mask, unit_tol: float = 1e-6) -> np.ndarray:
    p = np.asarray(getattr(pred, "normals", pred), dtype=np.float64)
    q = np.asarray(getattr(gt, "normals", gt), dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(p, q, mask)
    if not mask.any():
        raise EmptyMaskError("no pixels to evaluate")
    u, v = p[mask], q[mask]
    for name, arr in (("predicted", u), ("reference", v)):
        if np.any(np.abs(np.linalg.norm(arr, axis=1) - 1.0) > unit_tol):
            raise DomainError(f"{name} normals must be unit length under the mask")
    cos = np.clip(np.sum(u * v, axis=1), -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def normals_metrics(pred, gt, mask) -> NormalsMetricsReport:
    """Angular error statistics; accuracies count errors <= each threshold.

    The median of an even count is the lower of the two middle values.
    """
    ang = np.sort(angular_errors_deg(pred, gt, mask))
    n = ang.size
    acc = [float(np.mean(ang <= th)) for th in NORMAL_THRESHOLDS_DEG]
    return NormalsMetricsReport(
        mean_deg=float(np.mean(ang)),
        median_deg=float(ang[(n - 1) // 2]),
        rmse_deg=math.sqrt(float(np.mean(ang ** 2))),
        acc_11_25=acc[0],
        acc_22_5=acc[1],
        acc_30=acc[2],
        n_pixels=n,
    )


def write_csv(path, rows, report_cls) -> None:
    """Write ``(name, report)`` rows; the header is ``image`` plus the report fields."""
    names = report_cls.field_names()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image"] + names)
        for label, report in rows:
            d = report.as_dict()
            writer.writerow([label] + [_fmt(d[k]) for k in names])
