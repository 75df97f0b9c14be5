"""Pinhole intrinsics, field of view, and cropping expressed as an intrinsics edit.

Pixel coordinates are continuous and 0-based, with integer values at pixel
centers. A single focal length is used for both axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidBBoxError, InvalidIntrinsicsError, ManifestError


@dataclass(frozen=True)
class Intrinsics:
    f: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (math.isfinite(self.f) and math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise InvalidIntrinsicsError(f"non-finite intrinsics: {self}")
        if self.f <= 0:
            raise InvalidIntrinsicsError(f"focal length must be positive, got {self.f}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.f, 0.0, self.cx], [0.0, self.f, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self) -> np.ndarray:
        # closed form keeps K^-1 K == I to the last ulp
        inv_f = 1.0 / self.f
        return np.array(
            [
                [inv_f, 0.0, -self.cx * inv_f],
                [0.0, inv_f, -self.cy * inv_f],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def from_matrix(cls, K) -> "Intrinsics":
        K = np.asarray(K, dtype=np.float64)
        if K.shape != (3, 3):
            raise InvalidIntrinsicsError(f"expected a 3x3 matrix, got shape {K.shape}")
        K = K / K[2, 2]
        if not np.isclose(K[0, 0], K[1, 1], rtol=1e-12, atol=0.0):
            raise InvalidIntrinsicsError("anisotropic focal lengths are not supported")
        if K[0, 1] != 0 or K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0:
            raise InvalidIntrinsicsError("matrix is not of pinhole form")
        return cls(float(K[0, 0]), float(K[0, 2]), float(K[1, 2]))

    def to_dict(self) -> dict:
        return {"f": self.f, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        try:
            return cls(float(d["f"]), float(d["cx"]), float(d["cy"]))
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"intrinsics needs numeric keys f, cx, cy: {exc}") from None


@dataclass(frozen=True)
class ImageSize:
    w: int
    h: int

    def __post_init__(self):
        if int(self.w) != self.w or int(self.h) != self.h or self.w < 1 or self.h < 1:
            raise ValueError(f"image size must be positive integers, got {self.w}x{self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return self.w / 2, self.h / 2

    @classmethod
    def parse(cls, text: str) -> "ImageSize":
        """Parse ``"WxH"`` or a single integer for a square size."""
        parts = text.lower().split("x")
        if len(parts) == 1:
            return cls(int(parts[0]), int(parts[0]))
        if len(parts) == 2:
            return cls(int(parts[0]), int(parts[1]))
        raise ValueError(f"cannot parse image size {text!r}")


@dataclass(frozen=True)
class BBox:
    cu: float
    cv: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cu, self.cv, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBBoxError(f"non-finite bbox: {self}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBBoxError(f"bbox extent must be positive, got {self.w}x{self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return self.cu, self.cv

    @property
    def corners(self) -> np.ndarray:
        """(4, 2) array: top-left, top-right, bottom-right, bottom-left."""
        hw, hh = self.w / 2, self.h / 2
        return np.array(
            [
                [self.cu - hw, self.cv - hh],
                [self.cu + hw, self.cv - hh],
                [self.cu + hw, self.cv + hh],
                [self.cu - hw, self.cv + hh],
            ]
        )

    @classmethod
    def from_points(cls, uv) -> "BBox":
        """Tight axis-aligned box around a set of 2D points."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        lo, hi = uv.min(axis=0), uv.max(axis=0)
        return cls(
            float((lo[0] + hi[0]) / 2),
            float((lo[1] + hi[1]) / 2),
            float(hi[0] - lo[0]),
            float(hi[1] - lo[1]),
        )

    def to_dict(self) -> dict:
        return {"cu": self.cu, "cv": self.cv, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "BBox":
        try:
            return cls(float(d["cu"]), float(d["cv"]), float(d["w"]), float(d["h"]))
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"bbox needs numeric keys cu, cv, w, h: {exc}") from None


@dataclass(frozen=True)
class CropAffine:
    s: float
    tu: float
    tv: float

    def __post_init__(self):
        if not self.s > 0:
            raise InvalidBBoxError(f"crop scale must be positive, got {self.s}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.s, 0.0, self.tu], [0.0, self.s, self.tv], [0.0, 0.0, 1.0]])

    def apply(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64)
        out = np.empty_like(uv)
        out[..., 0] = self.s * uv[..., 0] + self.tu
        out[..., 1] = self.s * uv[..., 1] + self.tv
        return out

    def then(self, other: "CropAffine") -> "CropAffine":
        """Affine equal to applying ``self`` first and ``other`` second."""
        return CropAffine(other.s * self.s, other.s * self.tu + other.tu, other.s * self.tv + other.tv)

    def to_dict(self) -> dict:
        return {"s": self.s, "tu": self.tu, "tv": self.tv}

    @classmethod
    def from_dict(cls, d: dict) -> "CropAffine":
        return cls(float(d["s"]), float(d["tu"]), float(d["tv"]))


def fov(intrinsics: Intrinsics, size: ImageSize) -> tuple[float, float]:
    """Horizontal and vertical field of view in radians."""
    return (
        2.0 * math.atan(size.w / (2.0 * intrinsics.f)),
        2.0 * math.atan(size.h / (2.0 * intrinsics.f)),
    )


def square_bbox(bbox: BBox, padding: float = 1.0) -> BBox:
    """Expand to a square of side ``max(w, h) * padding`` about the same center."""
    if padding < 1.0:
        raise ValueError(f"padding factor must be >= 1, got {padding}")
    side = max(bbox.w, bbox.h) * padding
    return BBox(bbox.cu, bbox.cv, side, side)


def crop_affine(bbox: BBox, crop_size: ImageSize) -> CropAffine:
    """Affine taking original pixels to crop pixels so that ``bbox`` fills the crop.

    The bbox is expected to share the crop's aspect ratio (see
    :func:`square_bbox`); the scale is taken from the widths.
    """
    if not bbox.w > 0:
        raise InvalidBBoxError(f"degenerate bbox width {bbox.w}")
    s = crop_size.w / bbox.w
    return CropAffine(s, crop_size.w / 2 - s * bbox.cu, crop_size.h / 2 - s * bbox.cv)


def crop_intrinsics(intrinsics: Intrinsics, affine: CropAffine) -> Intrinsics:
    return Intrinsics(
        affine.s * intrinsics.f,
        affine.s * intrinsics.cx + affine.tu,
        affine.s * intrinsics.cy + affine.tv,
    )


def project_points(intrinsics: Intrinsics, points) -> np.ndarray:
    """Project (N, 3) camera-frame points to (N, 2) pixels. No depth check."""
    P = np.asarray(points, dtype=np.float64)
    u = intrinsics.f * P[..., 0] / P[..., 2] + intrinsics.cx
    v = intrinsics.f * P[..., 1] / P[..., 2] + intrinsics.cy
    return np.stack([u, v], axis=-1)


def load_intrinsics(path) -> Intrinsics:
    return Intrinsics.from_dict(_load_json(path))


def load_bbox(path) -> BBox:
    return BBox.from_dict(_load_json(path))


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}: {exc.msg}") from None
