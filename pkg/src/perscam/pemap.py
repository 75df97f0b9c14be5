"""Perspective encoding maps: each crop pixel's ray expressed on the z=1 plane."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import ImageSize, Intrinsics
from .errors import ManifestError

MAGIC = b"PEMAP\0"
_HEADER = struct.Struct("<6sII")


@dataclass(frozen=True, eq=False)
class PEMap:
    """(h, w, 2) grid of (x, y) plane coordinates, channel 0 = x, channel 1 = y.

    ``data`` is float64 in memory; the on-disk format rounds to float32.
    """

    data: np.ndarray

    @property
    def w(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.data[..., 0]

    @property
    def y(self) -> np.ndarray:
        return self.data[..., 1]

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, self.w, self.h)
        return header + np.ascontiguousarray(self.data, dtype="<f4").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "PEMap":
        if len(buf) < _HEADER.size:
            raise ManifestError("PEMAP buffer shorter than its header")
        magic, w, h = _HEADER.unpack_from(buf)
        if magic != MAGIC:
            raise ManifestError(f"bad PEMAP magic {magic!r}")
        expected = _HEADER.size + 8 * w * h
        if len(buf) != expected:
            raise ManifestError(f"PEMAP size mismatch: {len(buf)} bytes, expected {expected}")
        data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(h, w, 2)
        return cls(data.astype(np.float64))

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PEMap":
        return cls.from_bytes(Path(path).read_bytes())


def pe_map(crop_intrinsics: Intrinsics, size: ImageSize) -> PEMap:
    """Back-project every pixel of a ``size`` raster through ``crop_intrinsics`` onto z=1."""
    k = crop_intrinsics
    xs = (np.arange(size.w, dtype=np.float64) - k.cx) / k.f
    ys = (np.arange(size.h, dtype=np.float64) - k.cy) / k.f
    data = np.empty((size.h, size.w, 2))
    data[..., 0] = xs[None, :]
    data[..., 1] = ys[:, None]
    return PEMap(data)


def pe_map_stats(pemap: PEMap) -> tuple[float, float, float, float]:
    """(x_min, x_max, y_min, y_max) of the encoded frustum footprint."""
    return (
        float(pemap.x.min()),
        float(pemap.x.max()),
        float(pemap.y.min()),
        float(pemap.y.max()),
    )
