"""Homography warping and center cropping of 8-bit rasters.

Rasters are ``uint8`` numpy arrays shaped (h, w) or (h, w, 3).

Sampling is by inverse mapping with bilinear interpolation. Each output pixel
``q = (u, v)`` samples the source at ``hom_normalize(M^-1 q)``. Neighbours outside
the source contribute ``fill``, and a sample whose source position is
outside ``(-1, w) x (-1, h)`` or behind the camera (non-positive homogeneous
scale) is ``fill`` outright. All arithmetic is float64 in a fixed operation
order and rounds half to even on store, so the result does not depend on how
rows are split across threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from PIL import Image

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    njit = None

from .camera import ImageSize
from .errors import InvalidCropError, SingularHomographyError

ROW_CHUNK = 64


def thread_count() -> int:
    """Worker count from ``PERSCAM_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("PERSCAM_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError(f"PERSCAM_THREADS must be >= 0, got {n}")
    return n or (os.cpu_count() or 1)


def check_raster(src) -> np.ndarray:
    src = np.asarray(src)
    if src.dtype != np.uint8:
        raise TypeError(f"raster must be uint8, got {src.dtype}")
    if src.ndim not in (2, 3) or (src.ndim == 3 and src.shape[2] not in (1, 3)):
        raise ValueError(f"raster must be (h, w), (h, w, 1) or (h, w, 3), got {src.shape}")
    if src.shape[0] < 1 or src.shape[1] < 1:
        raise ValueError("empty raster")
    return src


def warp_image(
    src, M, out_size: ImageSize, fill: int = 0, threads: int | None = None, use_compiled: bool = True
) -> np.ndarray:
    """Warp ``src`` by pixel homography ``M`` into an ``out_size`` raster.

    ``use_compiled=False`` forces the vectorised numpy path even when numba is
    installed; both paths produce identical bytes.
    """
    src = check_raster(src)
    if not 0 <= fill <= 255:
        raise ValueError(f"fill value must be in [0, 255], got {fill}")
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise SingularHomographyError("homography must be a finite 3x3 matrix")
    det = np.linalg.det(M)
    if not abs(det) > 1e-12:
        raise SingularHomographyError(f"homography is singular (det={det:g})")
    Minv = np.linalg.inv(M)

    img = src.reshape(src.shape[0], src.shape[1], -1)
    out = np.empty((out_size.h, out_size.w, img.shape[2]), dtype=np.uint8)
    spans = [(v0, min(v0 + ROW_CHUNK, out_size.h)) for v0 in range(0, out_size.h, ROW_CHUNK)]
    kernel = _warp_rows_compiled if (use_compiled and _warp_rows_compiled is not None) else _warp_rows
    img = np.ascontiguousarray(img)
    n = thread_count() if threads is None else threads
    if n <= 1 or len(spans) == 1:
        for v0, v1 in spans:
            kernel(img, Minv, float(fill), v0, v1, out)
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            list(pool.map(lambda span: kernel(img, Minv, float(fill), *span, out), spans))
    return out.reshape(out_size.h, out_size.w, *src.shape[2:])


def _warp_rows(img, Minv, fill, v0, v1, out):
    H, W, C = img.shape
    (a, b, c), (d, e, f), (g, h, i) = Minv.tolist()
    u = np.arange(out.shape[1], dtype=np.float64)
    v = np.arange(v0, v1, dtype=np.float64)[:, None]
    X = a * u + b * v + c
    Y = d * u + e * v + f
    Z = g * u + h * v + i
    with np.errstate(divide="ignore", invalid="ignore"):
        x = X / Z
        y = Y / Z
        valid = (Z > 0) & (x > -1) & (x < W) & (y > -1) & (y < H)
    x = np.where(valid, x, 0.0)
    y = np.where(valid, y, 0.0)

    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    ix0 = x0.astype(np.intp)
    iy0 = y0.astype(np.intp)
    ix1 = ix0 + 1
    iy1 = iy0 + 1

    flat = img.reshape(-1, C)

    def tap(iy, ix):
        inside = (ix >= 0) & (ix < W) & (iy >= 0) & (iy < H)
        idx = np.clip(iy, 0, H - 1) * W + np.clip(ix, 0, W - 1)
        return np.where(inside[..., None], flat[idx], fill)

    p00 = tap(iy0, ix0)
    p01 = tap(iy0, ix1)
    p10 = tap(iy1, ix0)
    p11 = tap(iy1, ix1)
    top = p00 * (1 - fx) + p01 * fx
    bottom = p10 * (1 - fx) + p11 * fx
    val = top * (1 - fy) + bottom * fy
    val = np.where(valid[..., None], val, fill)
    out[v0:v1] = np.clip(np.rint(val), 0, 255).astype(np.uint8)


def _warp_rows_scalar(img, Minv, fill, v0, v1, out):
    # same operation order as _warp_rows, one pixel at a time
    H, W, C = img.shape
    a, b, c = Minv[0, 0], Minv[0, 1], Minv[0, 2]
    d, e, f = Minv[1, 0], Minv[1, 1], Minv[1, 2]
    g, h, i = Minv[2, 0], Minv[2, 1], Minv[2, 2]
    for r in range(v1 - v0):
        v = float(v0 + r)
        for col in range(out.shape[1]):
            u = float(col)
            X = a * u + b * v + c
            Y = d * u + e * v + f
            Z = g * u + h * v + i
            ok = Z > 0
            if ok:
                x = X / Z
                y = Y / Z
                ok = x > -1 and x < W and y > -1 and y < H
            if not ok:
                for ch in range(C):
                    out[v0 + r, col, ch] = _store(fill)
                continue
            x0 = math.floor(x)
            y0 = math.floor(y)
            fx = x - x0
            fy = y - y0
            gx = 1 - fx
            gy = 1 - fy
            ix0 = int(x0)
            iy0 = int(y0)
            ix1 = ix0 + 1
            iy1 = iy0 + 1
            if ix0 >= 0 and iy0 >= 0 and ix1 < W and iy1 < H:
                for ch in range(C):
                    top = img[iy0, ix0, ch] * gx + img[iy0, ix1, ch] * fx
                    bottom = img[iy1, ix0, ch] * gx + img[iy1, ix1, ch] * fx
                    out[v0 + r, col, ch] = _store(top * gy + bottom * fy)
                continue
            in_x0 = ix0 >= 0
            in_x1 = ix1 < W
            in_y0 = iy0 >= 0
            in_y1 = iy1 < H
            for ch in range(C):
                p00 = float(img[iy0, ix0, ch]) if (in_y0 and in_x0) else fill
                p01 = float(img[iy0, ix1, ch]) if (in_y0 and in_x1) else fill
                p10 = float(img[iy1, ix0, ch]) if (in_y1 and in_x0) else fill
                p11 = float(img[iy1, ix1, ch]) if (in_y1 and in_x1) else fill
                top = p00 * gx + p01 * fx
                bottom = p10 * gx + p11 * fx
                out[v0 + r, col, ch] = _store(top * gy + bottom * fy)


def _store(val):
    # rint rounds half to even
    r = np.rint(val)
    if r < 0.0:
        r = 0.0
    if r > 255.0:
        r = 255.0
    return np.uint8(r)


if njit is not None:
    _store = njit(cache=True, nogil=True)(_store)
    _warp_rows_compiled = njit(cache=True, nogil=True)(_warp_rows_scalar)
else:  # pragma: no cover
    _warp_rows_compiled = None


def crop_center(src, crop_size: ImageSize) -> np.ndarray:
    """Centered sub-raster; odd size differences put the extra pixel at the bottom/right."""
    src = check_raster(src)
    H, W = src.shape[:2]
    if crop_size.w > W or crop_size.h > H:
        raise InvalidCropError(f"crop {crop_size.w}x{crop_size.h} larger than source {W}x{H}")
    top = (H - crop_size.h) // 2
    left = (W - crop_size.w) // 2
    return src[top : top + crop_size.h, left : left + crop_size.w].copy()


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def write_png(path, raster) -> None:
    raster = check_raster(raster)
    if raster.ndim == 3 and raster.shape[2] == 1:
        raster = raster[..., 0]
    Image.fromarray(raster).save(path, format="PNG")
