"""Perspective rotation: turn the camera about its optical center to face the subject.

The rotation R brings the ray through the bbox center onto the optical axis.
Images follow through the homography ``M = K R K^-1``; 3D poses follow through R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import BBox, Intrinsics
from .errors import InvalidRotationError, SingularHomographyError

# below this off-axis distance on the z=1 plane the rotation is the identity
DEGENERATE_OFFSET = 1e-12
ROTATION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class RotationResult:
    R: np.ndarray
    n: np.ndarray
    phi: float
    M: np.ndarray

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.phi)

    def to_dict(self) -> dict:
        return {
            "R": self.R.tolist(),
            "n": self.n.tolist(),
            "phi": self.phi,
            "M": self.M.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RotationResult":
        return cls(
            np.asarray(d["R"], dtype=np.float64).reshape(3, 3),
            np.asarray(d["n"], dtype=np.float64).reshape(3),
            float(d["phi"]),
            np.asarray(d["M"], dtype=np.float64).reshape(3, 3),
        )


def hom_normalize(p) -> np.ndarray:
    """Divide homogeneous vectors (..., 3) by their last component, returning (..., 2)."""
    p = np.asarray(p, dtype=np.float64)
    return p[..., :2] / p[..., 2:3]


def apply_homography(H, uv) -> np.ndarray:
    """Map (..., 2) pixel coordinates through a 3x3 homography."""
    uv = np.asarray(uv, dtype=np.float64)
    ones = np.ones(uv.shape[:-1] + (1,))
    return hom_normalize(np.concatenate([uv, ones], axis=-1) @ np.asarray(H).T)


def rodrigues(axis, angle: float) -> np.ndarray:
    """Rotation matrix for a right-handed rotation of ``angle`` radians about unit ``axis``."""
    n = np.asarray(axis, dtype=np.float64)
    Kx = np.array(
        [
            [0.0, -n[2], n[1]],
            [n[2], 0.0, -n[0]],
            [-n[1], n[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * Kx + (1.0 - math.cos(angle)) * (Kx @ Kx)


def check_rotation(R, tol: float = ROTATION_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidRotationError(f"expected a finite 3x3 matrix, got shape {R.shape}")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidRotationError("matrix is not a proper rotation")
    return R


def unproject_center(intrinsics: Intrinsics, bbox: BBox) -> np.ndarray:
    """Point (x_c, y_c, 1) where the bbox-center ray meets the z=1 plane."""
    return np.array(
        [
            (bbox.cu - intrinsics.cx) / intrinsics.f,
            (bbox.cv - intrinsics.cy) / intrinsics.f,
            1.0,
        ]
    )


def warp_homography(intrinsics: Intrinsics, R) -> np.ndarray:
    """``K R K^-1``, scaled so the bottom-right entry is 1."""
    R = check_rotation(R)
    M = intrinsics.matrix @ R @ intrinsics.inverse
    if abs(M[2, 2]) > 1e-15:
        M = M / M[2, 2]
    return M


def rotation_to_center(intrinsics: Intrinsics, bbox: BBox) -> RotationResult:
    xc, yc, _ = unproject_center(intrinsics, bbox)
    r = math.hypot(xc, yc)
    if r < DEGENERATE_OFFSET:
        return RotationResult(np.eye(3), np.array([1.0, 0.0, 0.0]), 0.0, np.eye(3))
    # (x_c, y_c, 1) x (0, 0, d) is parallel to (y_c, -x_c, 0)
    n = np.array([yc / r, -xc / r, 0.0])
    # atan2 equals arccos(1/d) but stays accurate for tiny offsets
    phi = math.atan2(r, 1.0)
    R = rodrigues(n, phi)
    return RotationResult(R, n, phi, warp_homography(intrinsics, R))


def rotate_pose(R, pose) -> np.ndarray:
    """Apply R to every joint of a (J, 3) pose."""
    return np.asarray(pose, dtype=np.float64) @ np.asarray(R, dtype=np.float64).T


def rotated_bbox(bbox: BBox, M) -> BBox:
    """Square box centered on ``M``'s image of the bbox center that covers the warped corners."""
    corners = np.concatenate([bbox.corners, np.ones((4, 1))], axis=1) @ np.asarray(M).T
    if np.any(corners[:, 2] <= 0):
        raise SingularHomographyError("bbox corner maps behind the rotated camera")
    corners = corners[:, :2] / corners[:, 2:3]
    cu, cv = apply_homography(M, [bbox.cu, bbox.cv])
    half = float(np.max(np.abs(corners - [cu, cv])))
    return BBox(float(cu), float(cv), 2 * half, 2 * half)
