"""Depth-map geometry, losses and evaluation."""
from .core import CameraIntrinsics, CropRect, apply_cap, crop, validity_mask
from .densify import ClosingConfig, DensityStats, closing, density_stats, dilate, erode
from .errors import *  # noqa: F401,F403
from .filtering import EdgeConfig, GaussianConfig, GradientField, edge_mask, gaussian_blur, sobel
from .geometry import NormalMap, PlaneFitConfig, PointCloud, backproject, fit_normal, normals_from_depth
from .losses import LossResult, LossSpec, loss, loss_gradient
from .metrics import DepthMetricsReport, NormalsMetricsReport, depth_metrics, normals_metrics
from .sampling import SamplerConfig, sample_sparse

__version__ = "0.1.0"
