"""Masked depth, normal and classification losses with analytic gradients.

Every depth loss works on the pixels selected by ``mask``. Unless stated
otherwise the residual is ``h = ln(pred) - ln(gt)``; log-cosh uses the linear
residual ``pred - gt``. Gradients are taken with respect to the prediction and
are exactly zero outside the mask.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import check_same_shape
from .errors import DomainError, EmptyMaskError, EncodingError, ParseError

LN2 = math.log(2.0)

DEPTH_KINDS = ("silog", "silog_plus", "huber", "berhu", "l1", "l2", "l1_sum", "l2_sum",
               "charbonnier", "logcosh", "attention")
ALL_KINDS = DEPTH_KINDS + ("cosine", "2p5d", "cross_entropy")
# Kinds that have a per-pixel penalty usable inside the attention wrapper.
PER_PIXEL_KINDS = ("l1", "l2", "charbonnier", "logcosh", "huber", "berhu")

_ALIASES = {
    "silog+": "silog_plus", "silogplus": "silog_plus",
    "l1+": "l1_sum", "l1sum": "l1_sum", "l2+": "l2_sum", "l2sum": "l2_sum",
    "charbo": "charbonnier", "cosh": "logcosh", "log_cosh": "logcosh",
    "twopointfived": "2p5d", "2.5d": "2p5d", "l2.5d": "2p5d",
    "cce": "cross_entropy", "crossentropy": "cross_entropy",
}


@dataclass(frozen=True)
class LossSpec:
    kind: str = "silog"
    lam: float = 0.85
    theta: float = 10.0
    kappa: float = 5.0
    a: float = 0.45
    alpha: float = 1e-3
    beta: float = 1.0
    psi: float = 1e6
    inner: "LossSpec | None" = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        object.__setattr__(self, "kind", kind)
        if kind not in ALL_KINDS:
            raise ParseError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError("lambda must lie in [0, 1]")
        if not self.kappa > 0:
            raise DomainError("kappa must be positive")
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if not 0.0 < self.a < 1.0:
            raise DomainError("a must lie in (0, 1)")
        if not self.psi >= 0:
            raise DomainError("psi must be non-negative")
        if not self.beta > 0:
            raise DomainError("beta must be positive")
        if self.inner is None and kind in ("attention", "2p5d"):
            default = "l1" if kind == "attention" else "berhu"
            object.__setattr__(self, "inner", replace(self, kind=default, inner=None))
        if kind == "attention" and self.inner.kind not in PER_PIXEL_KINDS:
            raise DomainError(f"attention needs a per-pixel inner loss, got {self.inner.kind!r}")
        if kind == "2p5d" and self.inner.kind not in DEPTH_KINDS:
            raise DomainError(f"2.5D loss needs a depth inner loss, got {self.inner.kind!r}")

    @classmethod
    def parse(cls, text) -> "LossSpec":
        """Build a spec from ``"kind=berhu kappa=4"`` style tokens.

        ``kind=berhu+`` is BerHu with kappa 4. ``inner=<kind>`` selects the
        wrapped loss of ``attention`` / ``2p5d``; numeric parameters are shared
        with it.
        """
        tokens = text.split() if isinstance(text, str) else list(text)
        values: dict[str, str] = {}
        for tok in tokens:
            key, sep, val = tok.partition("=")
            if not sep or not val:
                raise ParseError(f"expected key=value, got {tok!r}")
            key = key.strip().lower()
            if key in values:
                raise ParseError(f"duplicate key {key!r}")
            values[key] = val.strip()
        if "kind" not in values:
            raise ParseError("missing key 'kind'")
        kind = values.pop("kind").lower()
        params: dict = {}
        if kind in ("berhu+", "berhu_plus"):
            kind = "berhu"
            params["kappa"] = 4.0
        names = {"lambda": "lam", "lam": "lam", "theta": "theta", "kappa": "kappa", "a": "a",
                 "alpha": "alpha", "beta": "beta", "psi": "psi"}
        inner = values.pop("inner", None)
        for key, val in values.items():
            if key not in names:
                raise ParseError(f"unknown loss parameter {key!r}")
            try:
                params[names[key]] = float(val)
            except ValueError:
                raise ParseError(f"parameter {key!r} is not a number: {val!r}") from None
        if inner is not None:
            inner_spec = cls.parse(f"kind={inner}")
            params["inner"] = cls(**{**params, "kind": inner_spec.kind,
                                     "kappa": params.get("kappa", inner_spec.kappa)})
        return cls(kind=kind, **params)


@dataclass
class LossResult:
    value: float
    gradient: np.ndarray | None = None
    normals_gradient: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


# --- helpers ---------------------------------------------------------------

def _masked(pred, gt, mask, log_domain: bool):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(pred, gt, mask)
    if not mask.any():
        raise EmptyMaskError("loss evaluated over an empty mask")
    y, t = pred[mask], gt[mask]
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(t))):
        raise DomainError("non-finite value under the mask")
    if log_domain and (np.any(y <= 0) or np.any(t <= 0)):
        raise DomainError("log-domain loss needs positive values under the mask")
    return y, t, mask


def _scatter(mask, values):
    out = np.zeros(mask.shape)
    out[mask] = values
    return out


def _log_cosh(h):
    ah = np.abs(h)
    small = ah < 1.0
    hs = np.where(small, h, 0.0)
    hl = np.where(small, 1.0, ah)
    return np.where(small, np.log1p(2.0 * np.sinh(hs / 2.0) ** 2),
                    hl + np.log1p(np.exp(-2.0 * hl)) - LN2)


def _robust_terms(h, g, reverse):
    """Per-pixel (value, d/dh, d/dg) of BerHu (reverse) or Huber."""
    ah = np.abs(h)
    if g == 0.0:
        z = np.zeros_like(h)
        return z, z, z
    quad = ah > g if reverse else ah < g
    val = np.where(quad, (h * h + g * g) / (2.0 * g), ah)
    dh = np.where(quad, h / g, np.sign(h))
    dg = np.where(quad, (g * g - h * h) / (2.0 * g * g), 0.0)
    return val, dh, dg


def _g_chain(h, kappa, weighted_dg):
    """Gradient contribution through g = max|h| / kappa (lands on the argmax)."""
    grad = np.zeros_like(h)
    k = int(np.argmax(np.abs(h)))
    grad[k] = np.sign(h[k]) / kappa * weighted_dg
    return grad


def _residual(kind, y, t):
    if kind == "logcosh":
        return y - t, np.ones_like(y)
    return np.log(y) - np.log(t), 1.0 / y


def per_pixel(spec: LossSpec, y, t):
    """Per-pixel penalty values and their gradient w.r.t. y.

    Returns ``(values, grad_fn)``; ``grad_fn(weights)`` gives the gradient of
    ``sum(weights * values)``, including the shared-threshold term for
    BerHu/Huber.
    """
    kind = spec.kind
    h, dh_dy = _residual(kind, y, t)
    if kind in ("l1", "l1_sum"):
        return np.abs(h), lambda w: w * np.sign(h) * dh_dy
    if kind in ("l2", "l2_sum"):
        return h * h, lambda w: w * 2.0 * h * dh_dy
    if kind == "charbonnier":
        base = h * h + spec.alpha ** 2
        return base ** spec.a, lambda w: w * spec.a * base ** (spec.a - 1.0) * 2.0 * h * dh_dy
    if kind == "logcosh":
        return _log_cosh(h), lambda w: w * np.tanh(h) * dh_dy
    if kind in ("berhu", "huber"):
        g = float(np.max(np.abs(h))) / spec.kappa
        val, dh, dg = _robust_terms(h, g, reverse=(kind == "berhu"))

        def grad(w):
            return (w * dh + _g_chain(h, spec.kappa, float(np.sum(w * dg)))) * dh_dy
        return val, grad
    raise DomainError(f"{kind!r} has no per-pixel form")


# --- depth losses ----------------------------------------------------------

def _silog(spec, y, t, plus: bool):
    h = np.log(y) - np.log(t)
    n = h.size
    mean_h = h.mean()
    if not plus:
        value = float(np.mean(h * h) - spec.lam * mean_h ** 2)
        grad = (2.0 * h / n - 2.0 * spec.lam * mean_h / n) / y
        return value, grad
    s = max(float(np.mean(h * h) - spec.lam * mean_h ** 2), 0.0)
    value = spec.theta * math.sqrt(s)
    if s == 0.0:
        return value, np.zeros_like(y)
    ds_dh = 2.0 * h / n - 2.0 * spec.lam * mean_h / n
    return value, spec.theta / (2.0 * math.sqrt(s)) * ds_dh / y


def _attention(spec, y, t):
    if np.any(t <= 1.0):
        raise DomainError("attention loss needs ground truth > 1 under the mask")
    log_t = np.log(t)
    gamma = log_t / log_t.max()
    la, lb = np.log(spec.beta * y), np.log(spec.beta * t)
    hi = np.maximum(la, lb)
    if np.any(hi == 0):
        raise DomainError("attention term undefined where max(log(beta*y), log(beta*y*)) == 0")
    eps = 1.0 - np.minimum(la, lb) / hi
    deps = np.where(la < lb, -1.0 / lb, np.where(la > lb, lb / (la * la), 0.0)) / y
    ell, ell_grad = per_pixel(spec.inner, y, t)
    weight = gamma + eps
    value = float(np.sum(weight * ell))
    return value, deps * ell + ell_grad(weight)


def _depth_loss(spec: LossSpec, pred, gt, mask) -> LossResult:
    kind = spec.kind
    if kind not in DEPTH_KINDS:
        raise DomainError(f"{kind!r} is not a depth loss")
    y, t, mask = _masked(pred, gt, mask, log_domain=(kind != "logcosh"))
    n = y.size
    reduction = "mean"
    if kind in ("silog", "silog_plus"):
        value, grad = _silog(spec, y, t, plus=(kind == "silog_plus"))
    elif kind == "attention":
        value, grad = _attention(spec, y, t)
        reduction = "sum"
    else:
        vals, grad_fn = per_pixel(spec, y, t)
        if kind in ("l1_sum", "l2_sum", "logcosh"):
            reduction = "sum"
        w = 1.0 if reduction == "sum" else 1.0 / n
        value = float(np.sum(vals) * w)
        grad = grad_fn(np.full(n, w))
    return LossResult(value=value, gradient=_scatter(mask, grad),
                      meta={"kind": kind, "reduction": reduction, "n": n})


def loss_silog(pred, gt, mask, spec: LossSpec = LossSpec("silog")) -> LossResult:
    return _depth_loss(replace(spec, kind="silog"), pred, gt, mask)


def loss_silog_plus(pred, gt, mask, spec: LossSpec = LossSpec("silog_plus")) -> LossResult:
    return _depth_loss(replace(spec, kind="silog_plus"), pred, gt, mask)


def loss_berhu(pred, gt, mask, spec: LossSpec = LossSpec("berhu")) -> LossResult:
    return _depth_loss(replace(spec, kind="berhu"), pred, gt, mask)


def loss_huber(pred, gt, mask, spec: LossSpec = LossSpec("huber")) -> LossResult:
    return _depth_loss(replace(spec, kind="huber"), pred, gt, mask)


def loss_l1(pred, gt, mask) -> LossResult:
    return _depth_loss(LossSpec("l1"), pred, gt, mask)


def loss_l2(pred, gt, mask) -> LossResult:
    return _depth_loss(LossSpec("l2"), pred, gt, mask)


def loss_l1_sum(pred, gt, mask) -> LossResult:
    return _depth_loss(LossSpec("l1_sum"), pred, gt, mask)


def loss_l2_sum(pred, gt, mask) -> LossResult:
    return _depth_loss(LossSpec("l2_sum"), pred, gt, mask)


def loss_charbonnier(pred, gt, mask, spec: LossSpec = LossSpec("charbonnier")) -> LossResult:
    return _depth_loss(replace(spec, kind="charbonnier"), pred, gt, mask)


def loss_logcosh(pred, gt, mask) -> LossResult:
    """Summed log(cosh(pred - gt)) over the mask."""
    return _depth_loss(LossSpec("logcosh"), pred, gt, mask)


def loss_attention(pred, gt, mask, spec: LossSpec = LossSpec("attention")) -> LossResult:
    """Distance-attention weighted sum of per-pixel penalties.

    Each pixel's penalty is weighted by ``gamma + eps`` where ``gamma`` is the
    ground truth's log depth relative to the largest one and ``eps`` measures
    the log-ratio disagreement at scale ``beta``.
    """
    return _depth_loss(replace(spec, kind="attention"), pred, gt, mask)


def loss(spec: LossSpec, pred, gt, mask) -> LossResult:
    """Evaluate any depth loss described by ``spec``."""
    return _depth_loss(spec, pred, gt, mask)


def loss_gradient(spec: LossSpec, pred, gt, mask) -> np.ndarray:
    return _depth_loss(spec, pred, gt, mask).gradient


# --- normals, 2.5D and classification ---------------------------------------

def _normals_array(n):
    return np.asarray(getattr(n, "normals", n), dtype=np.float64)


def loss_cosine(pred_n, gt_n, mask) -> LossResult:
    """Mean of ``1 - cos`` between predicted and reference normals."""
    p, q = _normals_array(pred_n), _normals_array(gt_n)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(p, q, mask)
    if not mask.any():
        raise EmptyMaskError("cosine loss evaluated over an empty mask")
    u, v = p[mask], q[mask]
    nu, nv = np.linalg.norm(u, axis=1), np.linalg.norm(v, axis=1)
    if np.any(nu == 0) or np.any(nv == 0):
        raise DomainError("zero-length normal under the mask")
    cos = np.sum(u * v, axis=1) / (nu * nv)
    n = len(cos)
    value = float(np.mean(1.0 - cos))
    grad_u = -(v / (nu * nv)[:, None] - (cos / nu ** 2)[:, None] * u) / n
    grad = np.zeros_like(p)
    grad[mask] = grad_u
    return LossResult(value=value, gradient=grad, meta={"kind": "cosine", "reduction": "mean", "n": n})


def loss_2p5d(pred_d, gt_d, pred_n, gt_n, depth_mask, normal_mask=None,
              spec: LossSpec = LossSpec("2p5d")) -> LossResult:
    """Inner depth loss plus ``psi`` times the cosine normal loss.

    ``gradient`` is w.r.t. the predicted depth and ``normals_gradient`` w.r.t.
    the predicted normals.
    """
    spec = replace(spec, kind="2p5d") if spec.kind != "2p5d" else spec
    depth_part = _depth_loss(spec.inner, pred_d, gt_d, depth_mask)
    cos = loss_cosine(pred_n, gt_n, depth_mask if normal_mask is None else normal_mask)
    return LossResult(value=depth_part.value + spec.psi * cos.value,
                      gradient=depth_part.gradient,
                      normals_gradient=spec.psi * cos.gradient,
                      meta={"kind": "2p5d", "inner": spec.inner.kind, "psi": spec.psi})


def loss_cross_entropy(logits, onehot, mask) -> LossResult:
    """Softmax cross entropy averaged over the masked pixels.

    ``logits`` and ``onehot`` are (..., K); the gradient is w.r.t. the logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if logits.shape != onehot.shape or logits.shape[:-1] != mask.shape:
        raise DomainError(f"shape mismatch: logits {logits.shape}, onehot {onehot.shape}, mask {mask.shape}")
    if not mask.any():
        raise EmptyMaskError("cross entropy evaluated over an empty mask")
    t, y = logits[mask], onehot[mask]
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise EncodingError("targets must be one-hot under the mask")
    shifted = t - t.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_p = shifted - lse
    n = len(t)
    value = float(-np.sum(y * log_p) / n)
    grad = np.zeros_like(logits)
    grad[mask] = (np.exp(log_p) - y) / n
    return LossResult(value=value, gradient=grad, meta={"kind": "cross_entropy", "reduction": "mean", "n": n})
