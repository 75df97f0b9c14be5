"""Pose representations and conversions between pixel+relative-depth and camera space.

Poses are numpy arrays: ``(J, 3)`` camera-frame joints in millimetres for XYZ,
``(J, 3)`` rows of (u px, v px, d mm) for UVD. Joint 0 is always the pelvis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import Intrinsics
from .errors import BehindCameraError, ManifestError, SkeletonMismatchError
from .persrot import check_rotation


@dataclass(frozen=True)
class Skeleton:
    name: str
    joints: tuple[str, ...]
    parents: tuple[int, ...]  # -1 for the root

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def bones(self) -> list[tuple[int, int]]:
        return [(p, j) for j, p in enumerate(self.parents) if p >= 0]

    def bone_lengths(self, pose) -> np.ndarray:
        pose = check_pose(pose, self)
        return np.array([np.linalg.norm(pose[j] - pose[p]) for p, j in self.bones])


SKELETONS = {
    "h36m14": Skeleton(
        "h36m14",
        (
            "pelvis",
            "r_hip", "r_knee", "r_ankle",
            "l_hip", "l_knee", "l_ankle",
            "thorax",
            "r_shoulder", "r_elbow", "r_wrist",
            "l_shoulder", "l_elbow", "l_wrist",
        ),
        (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 7, 11, 12),
    ),
    "mpi17": Skeleton(
        "mpi17",
        (
            "pelvis", "spine", "thorax", "neck", "head_top",
            "r_shoulder", "r_elbow", "r_wrist",
            "l_shoulder", "l_elbow", "l_wrist",
            "r_hip", "r_knee", "r_ankle",
            "l_hip", "l_knee", "l_ankle",
        ),
        (-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15),
    ),
}


def get_skeleton(name: str) -> Skeleton:
    try:
        return SKELETONS[name]
    except KeyError:
        raise SkeletonMismatchError(f"unknown skeleton {name!r}; known: {sorted(SKELETONS)}") from None


def check_pose(pose, skeleton: Skeleton | None = None) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    if pose.ndim != 2 or pose.shape[1] != 3:
        raise SkeletonMismatchError(f"pose must be (J, 3), got {pose.shape}")
    if skeleton is not None and pose.shape[0] != skeleton.n_joints:
        raise SkeletonMismatchError(
            f"{skeleton.name} has {skeleton.n_joints} joints, pose has {pose.shape[0]}"
        )
    if not np.all(np.isfinite(pose)):
        raise ValueError("pose has non-finite coordinates")
    return pose


def project(intrinsics: Intrinsics, pose) -> np.ndarray:
    """Camera-frame XYZ (J, 3) to UVD (J, 3) with depths relative to the pelvis."""
    pose = check_pose(pose)
    z = pose[:, 2]
    if np.any(z <= 0):
        bad = np.flatnonzero(z <= 0).tolist()
        raise BehindCameraError(f"joints {bad} are not in front of the camera")
    uvd = np.empty_like(pose)
    uvd[:, 0] = intrinsics.f * pose[:, 0] / z + intrinsics.cx
    uvd[:, 1] = intrinsics.f * pose[:, 1] / z + intrinsics.cy
    uvd[:, 2] = z - z[0]
    return uvd


def uvd_to_xyz(crop_intrinsics: Intrinsics, uvd, s_hat: float) -> np.ndarray:
    """Lift UVD to camera XYZ given the scale factor ``s_hat`` (mm per pixel).

    The pelvis absolute depth is ``s_hat * f``; every joint is placed at
    ``d_abs * K^-1 (u, v, 1)`` with ``d_abs = d + s_hat * f``.
    """
    uvd = check_pose(uvd)
    if not s_hat > 0:
        raise BehindCameraError(f"scale factor must be positive, got {s_hat}")
    k = crop_intrinsics
    d_abs = uvd[:, 2] + s_hat * k.f
    if np.any(d_abs <= 0):
        bad = np.flatnonzero(d_abs <= 0).tolist()
        raise BehindCameraError(f"joints {bad} have non-positive absolute depth")
    xyz = np.empty_like(uvd)
    xyz[:, 0] = d_abs * ((uvd[:, 0] - k.cx) / k.f)
    xyz[:, 1] = d_abs * ((uvd[:, 1] - k.cy) / k.f)
    xyz[:, 2] = d_abs
    return xyz


def unrotate_pose(R, pose_rotated) -> np.ndarray:
    """Undo a perspective rotation: each joint multiplied by R^T."""
    R = check_rotation(R)
    return check_pose(pose_rotated) @ R


def scale_factor(crop_intrinsics: Intrinsics, pose) -> float:
    """Pelvis depth over the crop focal length, in mm per pixel."""
    pelvis_z = float(check_pose(pose)[0, 2])
    if pelvis_z <= 0:
        raise BehindCameraError("pelvis is not in front of the camera")
    return pelvis_z / crop_intrinsics.f


def reconstruct_pose(crop_intrinsics: Intrinsics, R, uvd, s_hat: float) -> np.ndarray:
    """Original-camera XYZ from crop-frame UVD: lift, then rotate back by R^T."""
    return unrotate_pose(R, uvd_to_xyz(crop_intrinsics, uvd, s_hat))


def save_pose_xyz(path, skeleton: str, pose) -> None:
    pose = check_pose(pose, get_skeleton(skeleton))
    Path(path).write_text(json.dumps({"skeleton": skeleton, "joints_xyz_mm": pose.tolist()}))


def load_pose_xyz(path) -> tuple[str, np.ndarray]:
    d = _read_json(path)
    try:
        skeleton = get_skeleton(d["skeleton"])
        return skeleton.name, check_pose(d["joints_xyz_mm"], skeleton)
    except KeyError as exc:
        raise ManifestError(f"{path}: missing key {exc}") from None


def save_pose_uvd(path, uvd, s_hat: float) -> None:
    Path(path).write_text(json.dumps({"joints_uvd": check_pose(uvd).tolist(), "s_hat": s_hat}))


def load_pose_uvd(path) -> tuple[np.ndarray, float]:
    d = _read_json(path)
    try:
        return check_pose(d["joints_uvd"]), float(d["s_hat"])
    except KeyError as exc:
        raise ManifestError(f"{path}: missing key {exc}") from None


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}: {exc.msg}") from None
