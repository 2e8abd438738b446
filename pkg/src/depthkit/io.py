"""PNG and text formats for depth maps, normal maps, grey images and intrinsics.

Depth PNGs follow the KITTI convention: 16-bit single channel, metres times
256, stored 0 means no measurement. Normal PNGs are 16-bit RGB with each
component mapped from [-1, 1] onto [0, 65535]; an all-zero pixel is invalid.
"""
from __future__ import annotations

import os

import numpy as np
import png

from .core import CameraIntrinsics, as_depth_map
from .errors import FormatError, ParseError, RangeError
from .geometry import NormalMap

DEPTH_SCALE = 256.0
MAX_DEPTH = 65535 / DEPTH_SCALE
U16 = 65535


def _read_png(path):
    try:
        width, height, rows, info = png.Reader(filename=os.fspath(path)).read()
        data = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows])
    except png.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if info.get("palette"):
        raise FormatError(f"{path}: palette PNGs are not supported")
    planes = info["planes"]
    return data.reshape(height, width, planes), info["bitdepth"], planes


def _write_png(path, arr, bitdepth):
    arr = np.ascontiguousarray(arr)
    h, w = arr.shape[:2]
    planes = 1 if arr.ndim == 2 else arr.shape[2]
    writer = png.Writer(width=w, height=h, greyscale=(planes == 1), bitdepth=bitdepth)
    dtype = np.uint16 if bitdepth == 16 else np.uint8
    rows = arr.astype(dtype).reshape(h, w * planes)
    with open(path, "wb") as fh:
        writer.write(fh, rows.tolist())


def encode_depth(depth) -> np.ndarray:
    depth = as_depth_map(depth)
    if np.any(depth > MAX_DEPTH):
        raise RangeError(f"depth above {MAX_DEPTH:.4f} m cannot be stored")
    stored = np.rint(depth * DEPTH_SCALE)
    # a valid depth must never quantise to the "no measurement" code
    stored[(depth > 0) & (stored == 0)] = 1
    return stored.astype(np.uint16)


def decode_depth(stored) -> np.ndarray:
    return np.asarray(stored, dtype=np.float64) / DEPTH_SCALE


def write_depth(depth, path) -> None:
    _write_png(path, encode_depth(depth), 16)


def read_depth(path) -> np.ndarray:
    data, bitdepth, planes = _read_png(path)
    if bitdepth != 16 or planes != 1:
        raise FormatError(f"{path}: expected 16-bit single-channel PNG, got {bitdepth}-bit x{planes}")
    return decode_depth(data[..., 0])


def encode_normals(nmap: NormalMap) -> np.ndarray:
    n = np.clip(nmap.normals, -1.0, 1.0)
    enc = np.rint((n + 1.0) / 2.0 * U16).astype(np.uint16)
    enc[~nmap.valid] = 0
    return enc


def decode_normals(enc) -> NormalMap:
    enc = np.asarray(enc)
    valid = np.any(enc != 0, axis=2)
    n = enc.astype(np.float64) / U16 * 2.0 - 1.0
    norm = np.linalg.norm(n, axis=2)
    valid &= norm > 0
    n = np.where(valid[..., None], n / np.where(valid, norm, 1.0)[..., None], 0.0)
    return NormalMap(normals=n, valid=valid)


def write_normals(nmap: NormalMap, path) -> None:
    _write_png(path, encode_normals(nmap), 16)


def read_normals(path) -> NormalMap:
    data, bitdepth, planes = _read_png(path)
    if bitdepth != 16 or planes != 3:
        raise FormatError(f"{path}: expected 16-bit RGB PNG, got {bitdepth}-bit x{planes}")
    return decode_normals(data)


def read_gray(path) -> np.ndarray:
    """8- or 16-bit single-channel PNG as intensities in [0, 1]."""
    data, bitdepth, planes = _read_png(path)
    if planes != 1 or bitdepth not in (8, 16):
        raise FormatError(f"{path}: expected 8- or 16-bit single-channel PNG")
    return data[..., 0].astype(np.float64) / (2 ** bitdepth - 1)


def write_gray(gray, path, bitdepth: int = 8) -> None:
    top = 2 ** bitdepth - 1
    _write_png(path, np.rint(np.clip(gray, 0.0, 1.0) * top), bitdepth)


def write_mask(mask, path) -> None:
    _write_png(path, np.where(np.asarray(mask, dtype=bool), 255, 0), 8)


def parse_intrinsics(text: str, source: str = "<string>") -> CameraIntrinsics:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in ("fx", "fy", "ox", "oy"):
            raise ParseError(f"{source}:{lineno}: expected fx|fy|ox|oy=<float>, got {raw!r}")
        if key in values:
            raise ParseError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise ParseError(f"{source}:{lineno}: {key} is not a number") from None
    for key in ("fx", "fy", "ox", "oy"):
        if key not in values:
            raise ParseError(f"{source}: missing key {key!r}")
    return CameraIntrinsics(**values)


def read_intrinsics(path) -> CameraIntrinsics:
    with open(path) as fh:
        return parse_intrinsics(fh.read(), source=os.fspath(path))


def write_intrinsics(cam: CameraIntrinsics, path) -> None:
    with open(path, "w") as fh:
        for key in ("fx", "fy", "ox", "oy"):
            fh.write(f"{key}={getattr(cam, key)!r}\n")
