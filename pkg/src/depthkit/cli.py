"""Command-line front end.

Every command prints machine-readable ``key=value`` lines on stdout. Exit
status is 0 on success, 1 on runtime failure (IO, format, capacity, shape)
and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import io as dio
from .core import CropRect, apply_cap, crop
from .densify import ClosingConfig, closing, density_stats
from .errors import DepthKitError, DimensionError
from .filtering import EdgeConfig, GaussianConfig, edge_mask, gaussian_blur, sobel
from .geometry import NormalMap, PlaneFitConfig, normals_from_depth
from .gradcheck import central_difference, relative_error
from .losses import DEPTH_KINDS, LossSpec, loss
from .metrics import DepthMetricsReport, NormalsMetricsReport, depth_metrics, normals_metrics, write_csv
from .sampling import GENERATOR, SamplerConfig, keep_probability, sample_sparse

AGGREGATE = "__aggregate__"
GRAD_CHECK_PIXELS = 256


class UsageError(Exception):
    pass


def _odd_kernel(text):
    k = int(text)
    if k < 3 or k % 2 == 0:
        raise argparse.ArgumentTypeError("kernel must be odd and >= 3")
    return k


def _window(text):
    w = int(text)
    if w < 3 or w % 2 == 0:
        raise argparse.ArgumentTypeError("window must be odd >= 3")
    return w


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _non_negative_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _cap(text):
    lo, sep, hi = text.partition(":")
    try:
        lo_v, hi_v = float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError("cap must be <lo>:<hi>") from None
    if not sep or not 0 <= lo_v < hi_v:
        raise argparse.ArgumentTypeError("cap must be <lo>:<hi> with 0 <= lo < hi")
    return lo_v, hi_v


def _crop(text):
    try:
        return CropRect.parse(text)
    except (ValueError, DepthKitError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _tau(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError("tau must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("densify", help="morphological closing of a sparse depth PNG")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=_odd_kernel, required=True)
    p.add_argument("--it", type=_positive_int, required=True)
    p.add_argument("--no-preserve", action="store_true")
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("normals", help="surface normals from a depth PNG")
    p.add_argument("--depth", required=True)
    p.add_argument("--cam", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=_window, default=5)
    p.add_argument("--blur", action="store_true")
    p.add_argument("--edges", type=_tau, metavar="TAU")
    p.set_defaults(func=cmd_normals)

    p = sub.add_parser("sample", help="simulate a sparse sensor from ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--n", type=_non_negative_int, required=True)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="depth metrics for a PNG pair or two directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--cap", type=_cap)
    p.add_argument("--crop", type=_crop)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-normals", help="angular metrics for normal PNGs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--crop", type=_crop)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval_normals)

    p = sub.add_parser("losscheck", help="evaluate a loss on a PNG pair")
    p.add_argument("--spec", nargs="+", required=True, metavar="KEY=VALUE")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--grad-check", action="store_true")
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("density", help="average valid-pixel density of depth PNGs")
    p.add_argument("--in", dest="inp", required=True)
    p.set_defaults(func=cmd_density)
    return parser


def _emit(out, **pairs):
    for k, v in pairs.items():
        if isinstance(v, float):
            v = repr(v)
        print(f"{k}={v}", file=out)


def _collect(path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.png"), key=lambda p: p.name)
        if not files:
            raise DepthKitError(f"{path}: no PNG files")
        return files
    if not path.exists():
        raise FileNotFoundError(f"{path}: no such file")
    return [path]


def _pairs(pred, gt):
    preds, gts = _collect(pred), _collect(gt)
    if len(preds) != len(gts):
        raise DimensionError(f"{len(preds)} predictions but {len(gts)} ground-truth files")
    return list(zip(preds, gts))


def cmd_densify(args, out):
    depth = dio.read_depth(args.inp)
    cfg = ClosingConfig(kernel=args.k, iterations=args.it, preserve_original=not args.no_preserve)
    closed = closing(depth, cfg)
    dio.write_depth(closed, args.out)
    print(density_stats(depth).to_kv("before."), file=out)
    print(density_stats(closed).to_kv("after."), file=out)
    return 0


def _edges_path(out_path: str) -> str:
    base = out_path[:-4] if out_path.lower().endswith(".png") else out_path
    return base + ".edges.png"


def cmd_normals(args, out):
    depth = dio.read_depth(args.depth)
    cam = dio.read_intrinsics(args.cam)
    nmap = normals_from_depth(depth, cam, PlaneFitConfig(window=args.window))
    dio.write_normals(nmap, args.out)
    _emit(out, valid_normals=int(nmap.valid.sum()), pixels=int(depth.size))
    if args.edges is not None:
        # Intensity image for the edge detector: depth scaled to [0, 1].
        top = depth.max()
        gray = depth / top if top > 0 else depth
        if args.blur:
            gray = gaussian_blur(gray, GaussianConfig())
        edges = edge_mask(sobel(gray), EdgeConfig(tau=args.edges))
        path = _edges_path(args.out)
        dio.write_mask(edges, path)
        _emit(out, edges=path, edge_pixels=int(edges.sum()))
    return 0


def cmd_sample(args, out):
    gt = dio.read_depth(args.gt)
    available = int((gt > 0).sum())
    p = keep_probability(args.n, available)
    sparse = sample_sparse(gt, SamplerConfig(desired=args.n, seed=args.seed))
    dio.write_depth(sparse, args.out)
    _emit(out, kept=int((sparse > 0).sum()), available=available, probability=p,
          seed=args.seed, generator=GENERATOR)
    return 0


def _print_block(out, label, report):
    print(f"image={label}", file=out)
    print(report.to_kv(), file=out)
    print(file=out)


def cmd_eval(args, out):
    rows = []
    for pred_path, gt_path in _pairs(args.pred, args.gt):
        pred, gt = dio.read_depth(pred_path), dio.read_depth(gt_path)
        if pred.shape != gt.shape:
            raise DimensionError(f"{pred_path.name}: shape {pred.shape} != {gt.shape}")
        if args.crop is not None:
            pred, gt = crop(pred, args.crop), crop(gt, args.crop)
        lo, hi = args.cap if args.cap is not None else (0.0, math.inf)
        # pixels the prediction leaves empty are not scored
        mask = apply_cap(pred, gt, lo, hi) & (pred > 0)
        report = depth_metrics(pred, gt, mask)
        rows.append((gt_path.name, report))
        _print_block(out, gt_path.name, report)
    agg = DepthMetricsReport.mean_of(r for _, r in rows)
    _print_block(out, AGGREGATE, agg)
    if args.csv:
        write_csv(args.csv, rows + [(AGGREGATE, agg)], DepthMetricsReport)
    return 0


def cmd_eval_normals(args, out):
    rows = []
    for pred_path, gt_path in _pairs(args.pred, args.gt):
        pred, gt = dio.read_normals(pred_path), dio.read_normals(gt_path)
        if pred.shape != gt.shape:
            raise DimensionError(f"{pred_path.name}: shape {pred.shape} != {gt.shape}")
        if args.crop is not None:
            pred = NormalMap(crop(pred.normals, args.crop), crop(pred.valid, args.crop))
            gt = NormalMap(crop(gt.normals, args.crop), crop(gt.valid, args.crop))
        report = normals_metrics(pred, gt, pred.valid & gt.valid)
        rows.append((gt_path.name, report))
        _print_block(out, gt_path.name, report)
    agg = NormalsMetricsReport.mean_of(r for _, r in rows)
    _print_block(out, AGGREGATE, agg)
    if args.csv:
        write_csv(args.csv, rows + [(AGGREGATE, agg)], NormalsMetricsReport)
    return 0


def cmd_losscheck(args, out):
    try:
        spec = LossSpec.parse(args.spec)
    except DepthKitError as exc:
        raise UsageError(str(exc)) from None
    if spec.kind not in DEPTH_KINDS:
        raise UsageError(f"loss kind {spec.kind!r} does not operate on depth maps")
    pred, gt = dio.read_depth(args.pred), dio.read_depth(args.gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"shape {pred.shape} != {gt.shape}")
    mask = (gt > 0) & (pred > 0)
    result = loss(spec, pred, gt, mask)
    _emit(out, kind=spec.kind, reduction=result.meta["reduction"], n_pixels=result.meta["n"],
          loss=result.value)
    if args.grad_check:
        flat = np.flatnonzero(mask)
        rng = np.random.default_rng(0)
        if flat.size > GRAD_CHECK_PIXELS:
            flat = np.sort(rng.choice(flat, GRAD_CHECK_PIXELS, replace=False))
        numeric = central_difference(lambda x: loss(spec, x, gt, mask).value, pred, indices=flat)
        err = relative_error(result.gradient.reshape(-1)[flat], numeric.reshape(-1)[flat])
        _emit(out, grad_checked_pixels=int(flat.size), max_rel_err=err)
    return 0


def cmd_density(args, out):
    stats = [density_stats(dio.read_depth(p)) for p in _collect(args.inp)]
    _emit(out, files=len(stats),
          mean_valid_count=float(np.mean([s.valid_count for s in stats])),
          mean_valid_percent=float(100.0 * np.mean([s.valid_fraction for s in stats])))
    return 0


def run(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (DepthKitError, OSError) as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
