"""Synthetic scenes with exact labels for every preprocessing stage.

Subjects are stick figures with fixed bone lengths, placed in front of a
pinhole camera whose principal point sits at the image center. Each
:class:`Sample` carries the original-frame labels plus everything produced by
perspective rotation and cropping, and is self-checked when built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np
from scipy.optimize import brentq

from .camera import (
    BBox,
    CropAffine,
    ImageSize,
    Intrinsics,
    crop_affine,
    crop_intrinsics,
    square_bbox,
)
from .errors import BehindCameraError, ManifestError, PerscamError, SceneError
from .persrot import (
    RotationResult,
    apply_homography,
    rodrigues,
    rotate_pose,
    rotated_bbox,
    rotation_to_center,
)
from .pose_geometry import (
    Skeleton,
    check_pose,
    get_skeleton,
    project,
    reconstruct_pose,
    scale_factor,
)

MAX_RETRIES = 100
CONSISTENCY_TOL = 1e-6
# poses used for exact-equality constructions live on this dyadic grid (mm)
DYADIC_STEP = 2.0**-10

# (rest direction in the body frame, length mm, max articulation deg) per non-root joint.
# Body frame: x toward the subject's left, y down, z away from the camera when facing it.
_DOWN, _UP = (0.0, 1.0, 0.0), (0.0, -1.0, 0.0)
_RIGHT, _LEFT = (-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)
_BONES = {
    "r_hip": (_RIGHT, 120.0, 10.0),
    "l_hip": (_LEFT, 120.0, 10.0),
    "r_knee": (_DOWN, 440.0, 35.0),
    "l_knee": (_DOWN, 440.0, 35.0),
    "r_ankle": (_DOWN, 425.0, 40.0),
    "l_ankle": (_DOWN, 425.0, 40.0),
    "spine": (_UP, 240.0, 15.0),
    "thorax": (_UP, 250.0, 15.0),
    "neck": (_UP, 90.0, 20.0),
    "head_top": (_UP, 220.0, 25.0),
    "r_shoulder": (_RIGHT, 170.0, 15.0),
    "l_shoulder": (_LEFT, 170.0, 15.0),
    "r_elbow": (_DOWN, 290.0, 80.0),
    "l_elbow": (_DOWN, 290.0, 80.0),
    "r_wrist": (_DOWN, 255.0, 90.0),
    "l_wrist": (_DOWN, 255.0, 90.0),
}
# h36m14 has no spine joint: thorax hangs directly off the pelvis
_H36M_THORAX = (_UP, 490.0, 15.0)


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_samples: int = 100
    f_range: tuple[float, float] = (800.0, 2000.0)
    image_size: ImageSize = ImageSize(1920, 1080)
    subject_distance_range: tuple[float, float] = (3000.0, 8000.0)
    subject_offset_range: tuple[float, float] = (-1500.0, 1500.0)
    skeleton: str = "h36m14"
    crop_size: ImageSize = ImageSize(256, 256)
    padding: float = 1.0
    placement: str = "frustum"  # "frustum" | "centered" | "angular"
    phi_range_deg: tuple[float, float] = (0.0, 30.0)
    bone_scale: float = 1.0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        for name in ("f_range", "subject_distance_range", "subject_offset_range", "phi_range_deg"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if self.f_range[0] <= 0 or self.subject_distance_range[0] <= 0:
            raise ValueError("focal lengths and subject distances must be positive")
        if not (0 <= self.phi_range_deg[0] and self.phi_range_deg[1] < 90):
            raise ValueError("phi_range_deg must lie in [0, 90)")
        if self.placement not in ("frustum", "centered", "angular"):
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.crop_size.w != self.crop_size.h:
            raise ValueError("crop size must be square")
        if self.padding < 1.0 or self.bone_scale <= 0:
            raise ValueError("padding must be >= 1 and bone_scale > 0")
        get_skeleton(self.skeleton)


@dataclass(frozen=True, eq=False)
class Sample:
    index: int
    skeleton: str
    image_size: ImageSize
    crop_size: ImageSize
    intrinsics: Intrinsics
    pose_xyz: np.ndarray
    bbox: BBox
    pose_uvd: np.ndarray
    rotation: RotationResult
    rotated_bbox: BBox
    crop_affine: CropAffine
    crop_intrinsics: Intrinsics
    pose_uvd_crop: np.ndarray
    s_hat: float

    @property
    def phi_deg(self) -> float:
        return self.rotation.phi_deg

    def direct_crop_uvd(self) -> np.ndarray:
        """Labels of a plain bbox crop of the original image, no rotation applied."""
        k = crop_intrinsics(self.intrinsics, crop_affine(self.bbox, self.crop_size))
        return project(k, self.pose_xyz)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "skeleton": self.skeleton,
            "image_size": [self.image_size.w, self.image_size.h],
            "crop_size": [self.crop_size.w, self.crop_size.h],
            "intrinsics": self.intrinsics.to_dict(),
            "joints_xyz_mm": self.pose_xyz.tolist(),
            "bbox": self.bbox.to_dict(),
            "joints_uvd": self.pose_uvd.tolist(),
            "rotation": self.rotation.to_dict(),
            "rotated_bbox": self.rotated_bbox.to_dict(),
            "crop_affine": self.crop_affine.to_dict(),
            "crop_intrinsics": self.crop_intrinsics.to_dict(),
            "joints_uvd_crop": self.pose_uvd_crop.tolist(),
            "s_hat": self.s_hat,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sample":
        return cls(
            index=int(d["index"]),
            skeleton=str(d["skeleton"]),
            image_size=ImageSize(*d["image_size"]),
            crop_size=ImageSize(*d["crop_size"]),
            intrinsics=Intrinsics.from_dict(d["intrinsics"]),
            pose_xyz=check_pose(d["joints_xyz_mm"]),
            bbox=BBox.from_dict(d["bbox"]),
            pose_uvd=check_pose(d["joints_uvd"]),
            rotation=RotationResult.from_dict(d["rotation"]),
            rotated_bbox=BBox.from_dict(d["rotated_bbox"]),
            crop_affine=CropAffine.from_dict(d["crop_affine"]),
            crop_intrinsics=Intrinsics.from_dict(d["crop_intrinsics"]),
            pose_uvd_crop=check_pose(d["joints_uvd_crop"]),
            s_hat=float(d["s_hat"]),
        )


def centered_intrinsics(f: float, size: ImageSize) -> Intrinsics:
    cx, cy = size.center
    return Intrinsics(f, cx, cy)


def random_pose(rng: np.random.Generator, skeleton: Skeleton, bone_scale: float = 1.0) -> np.ndarray:
    """Pelvis-rooted pose (J, 3) in the camera axes, pelvis at the origin.

    Every bone keeps its rest length; its direction is the rest direction
    turned by a random angle up to the bone's articulation limit. The body is
    then yawed uniformly and tilted by up to 10 degrees.
    """
    pose = np.zeros((skeleton.n_joints, 3))
    for j, (name, parent) in enumerate(zip(skeleton.joints, skeleton.parents)):
        if parent < 0:
            continue
        rest, length, limit = _bone_spec(skeleton, name)
        axis = _unit(rng.normal(size=3))
        angle = math.radians(rng.uniform(0.0, limit))
        direction = rodrigues(axis, angle) @ np.asarray(rest)
        pose[j] = pose[parent] + bone_scale * length * direction
    yaw = rng.uniform(-math.pi, math.pi)
    tilt_axis = _unit(np.array([rng.normal(), 0.0, rng.normal()]))
    tilt = math.radians(rng.uniform(0.0, 10.0))
    body = rodrigues(tilt_axis, tilt) @ rodrigues([0.0, 1.0, 0.0], yaw)
    return rotate_pose(body, pose)


def _bone_spec(skeleton: Skeleton, name: str):
    if skeleton.name == "h36m14" and name == "thorax":
        return _H36M_THORAX
    return _BONES[name]


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.array([1.0, 0.0, 0.0])


def in_view(intrinsics: Intrinsics, size: ImageSize, pose) -> bool:
    pose = np.asarray(pose)
    if np.any(pose[:, 2] <= 0):
        return False
    uvd = project(intrinsics, pose)
    u, v = uvd[:, 0], uvd[:, 1]
    return bool(np.all((u >= 0) & (u <= size.w - 1) & (v >= 0) & (v <= size.h - 1)))


def make_sample(
    pose_xyz,
    intrinsics: Intrinsics,
    image_size: ImageSize,
    skeleton: str = "h36m14",
    crop_size: ImageSize = ImageSize(256, 256),
    padding: float = 1.0,
    index: int = 0,
    bbox: BBox | None = None,
) -> Sample:
    """Derive every label for one posed subject and verify their mutual consistency.

    ``bbox`` defaults to the square-expanded tight bounds of the projected joints.
    """
    pose = check_pose(pose_xyz, get_skeleton(skeleton))
    uvd = project(intrinsics, pose)
    if bbox is None:
        bbox = square_bbox(BBox.from_points(uvd[:, :2]), padding)
    rot = rotation_to_center(intrinsics, bbox)
    rbox = rotated_bbox(bbox, rot.M)
    affine = crop_affine(rbox, crop_size)
    k_crop = crop_intrinsics(intrinsics, affine)
    pose_rot = rotate_pose(rot.R, pose)
    uvd_crop = project(k_crop, pose_rot)
    sample = Sample(
        index=index,
        skeleton=skeleton,
        image_size=image_size,
        crop_size=crop_size,
        intrinsics=intrinsics,
        pose_xyz=pose,
        bbox=bbox,
        pose_uvd=uvd,
        rotation=rot,
        rotated_bbox=rbox,
        crop_affine=affine,
        crop_intrinsics=k_crop,
        pose_uvd_crop=uvd_crop,
        s_hat=scale_factor(k_crop, pose_rot),
    )
    verify_sample(sample)
    return sample


def consistency_errors(sample: Sample) -> dict[str, float]:
    """Worst-case residuals of the label relations a sample must satisfy."""
    s = sample
    recon = reconstruct_pose(s.crop_intrinsics, s.rotation.R, s.pose_uvd_crop, s.s_hat)
    warped = apply_homography(s.rotation.M, s.pose_uvd[:, :2])
    rotated_proj = project(s.intrinsics, rotate_pose(s.rotation.R, s.pose_xyz))[:, :2]
    center = apply_homography(s.rotation.M, [s.bbox.cu, s.bbox.cv])
    return {
        "roundtrip_mm": float(np.abs(recon - s.pose_xyz).max()),
        "warp_px": float(np.abs(warped - rotated_proj).max()),
        "centering_px": float(np.abs(center - [s.intrinsics.cx, s.intrinsics.cy]).max()),
        "crop_center_px": float(
            np.abs(np.array([s.crop_intrinsics.cx, s.crop_intrinsics.cy]) - s.crop_size.center).max()
        ),
    }


def verify_sample(sample: Sample, tol: float = CONSISTENCY_TOL) -> None:
    errors = consistency_errors(sample)
    bad = {k: v for k, v in errors.items() if not v <= tol}
    if bad:
        raise SceneError(f"sample {sample.index} failed consistency checks: {bad}")


def recenter(intrinsics: Intrinsics, pose, padding: float = 1.0, max_iter: int = 20) -> np.ndarray:
    """Rotate ``pose`` about the optical center until its bbox center is on the optical axis."""
    pose = check_pose(pose)
    for _ in range(max_iter):
        bbox = square_bbox(BBox.from_points(project(intrinsics, pose)[:, :2]), padding)
        rot = rotation_to_center(intrinsics, bbox)
        if rot.phi == 0.0:
            return pose
        pose = rotate_pose(rot.R, pose)
    raise SceneError("bbox center did not converge onto the optical axis")


def _draw_subject(config: SceneConfig, rng: np.random.Generator, skeleton: Skeleton):
    f = rng.uniform(*config.f_range)
    k = centered_intrinsics(f, config.image_size)
    body = random_pose(rng, skeleton, config.bone_scale)
    z = rng.uniform(*config.subject_distance_range)
    if config.placement == "frustum":
        x = rng.uniform(*config.subject_offset_range)
        y = rng.uniform(*config.subject_offset_range)
        return k, body + [x, y, z]
    pose = recenter(k, body + [0.0, 0.0, z], config.padding)
    if config.placement == "angular":
        phi = math.radians(rng.uniform(*config.phi_range_deg))
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        pose = rotate_pose(rodrigues([math.cos(azimuth), math.sin(azimuth), 0.0], phi), pose)
    return k, pose


def generate_one(config: SceneConfig, index: int) -> Sample:
    """The ``index``-th sample of ``config``; independent of every other index."""
    skeleton = get_skeleton(config.skeleton)
    rng = np.random.default_rng([config.seed, index])
    for _ in range(MAX_RETRIES):
        try:
            k, pose = _draw_subject(config, rng, skeleton)
        except PerscamError:
            continue
        if not in_view(k, config.image_size, pose):
            continue
        try:
            return make_sample(
                pose, k, config.image_size, config.skeleton, config.crop_size, config.padding, index
            )
        except BehindCameraError:
            continue
    raise SceneError(f"sample {index}: subject left the view frustum {MAX_RETRIES} times")


def generate(config: SceneConfig) -> list[Sample]:
    return [generate_one(config, i) for i in range(config.n_samples)]


def canonical_pose(skeleton: str = "h36m14", seed: int = 3) -> np.ndarray:
    """Fixed articulated pose, pelvis at the origin, snapped to the dyadic grid."""
    rng = np.random.default_rng([seed, 0xF16])
    pose = random_pose(rng, get_skeleton(skeleton))
    return dyadic(pose - pose[0])


def dyadic(pose) -> np.ndarray:
    """Snap coordinates to multiples of ``DYADIC_STEP`` so small translations are exact."""
    return np.round(np.asarray(pose, dtype=np.float64) / DYADIC_STEP) * DYADIC_STEP


def _pixel_height(f: float, rel_pose: np.ndarray, distance: float) -> float:
    ratio = rel_pose[:, 1] / (rel_pose[:, 2] + distance)
    return f * float(ratio.max() - ratio.min())


def fig3_pair(
    pose,
    f_a: float,
    f_b: float,
    size: ImageSize,
    fill: float = 0.6,
    skeleton: str = "h36m14",
    crop_size: ImageSize = ImageSize(256, 256),
) -> tuple[Sample, Sample]:
    """Two cameras on one optical axis seeing the same subject at the same pixel height.

    Camera a sits where the subject spans ``fill`` of the image height; camera
    b with focal length ``f_b`` is moved along the axis to reproduce that
    height. Relative depths agree bit for bit because both camera-frame poses
    are dyadic translations of one shared pelvis-rooted pose.
    """
    rel = dyadic(check_pose(pose) - check_pose(pose)[0])
    near = DYADIC_STEP - float(rel[:, 2].min())
    target = fill * size.h

    def distance_for(f, height):
        if _pixel_height(f, rel, near) < height:
            raise SceneError(f"subject cannot reach {height:.1f} px at f={f}")
        far = near + 1.0
        while _pixel_height(f, rel, far) > height:
            far *= 2.0
        return float(dyadic(brentq(lambda d: _pixel_height(f, rel, d) - height, near, far, xtol=1e-9)))

    d_a = distance_for(f_a, target)
    height = _pixel_height(f_a, rel, d_a)
    d_b = d_a if f_b == f_a else distance_for(f_b, height)
    samples = []
    for f, d in ((f_a, d_a), (f_b, d_b)):
        k = centered_intrinsics(f, size)
        posed = rel + [0.0, 0.0, d]
        if not in_view(k, size, posed):
            raise SceneError(f"subject does not fit in the {size.w}x{size.h} image at f={f}")
        samples.append(make_sample(posed, k, size, skeleton, crop_size))
    return samples[0], samples[1]


def fig2_presets(
    pose=None,
    f: float = 1000.0,
    size: ImageSize = ImageSize(1920, 1080),
    distance: float = 6000.0,
    angle_deg: float = 4.0,
    skeleton: str = "h36m14",
    crop_size: ImageSize = ImageSize(256, 256),
) -> dict[str, Sample]:
    """Three subjects with one body seen by one camera.

    ``b`` stands on the optical axis. ``a`` is ``b`` swung about the optical
    center by ``angle_deg``: it presents the same view to the camera, so its
    plain crop nearly matches ``b``'s, but its relative depths differ. ``c`` is
    ``a`` slid sideways back to the axis without turning, so it keeps ``a``'s
    relative depths exactly while its crop changes.
    """
    rel = canonical_pose(skeleton) if pose is None else dyadic(check_pose(pose) - check_pose(pose)[0])
    k = centered_intrinsics(f, size)
    pose_b = rel + [0.0, 0.0, distance]
    swing = rodrigues([0.0, 1.0, 0.0], -math.radians(angle_deg))
    pose_a = rotate_pose(swing, pose_b)
    pose_c = pose_a - [pose_a[0, 0], 0.0, 0.0]
    out = {}
    for name, p in (("a", pose_a), ("b", pose_b), ("c", pose_c)):
        if not in_view(k, size, p):
            raise SceneError(f"preset {name} leaves the image")
        out[name] = make_sample(p, k, size, skeleton, crop_size)
    return out


@dataclass(frozen=True, eq=False)
class PhiStats:
    bin_edges: np.ndarray
    counts: np.ndarray
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    @property
    def mode(self) -> float:
        return float(self.grid[np.argmax(self.density)])

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def histogram_density(self) -> np.ndarray:
        widths = np.diff(self.bin_edges)
        return self.counts / (self.counts.sum() * widths)


def phi_statistics(
    samples_or_angles: Iterable,
    bandwidth: float | None = None,
    bin_width: float = 1.0,
    zero_spread_bandwidth: float = 0.25,
) -> PhiStats:
    """Histogram and Gaussian KDE of rotation angles in degrees.

    Accepts samples or bare angles in degrees. The bandwidth defaults to
    Scott's rule; a set with no spread falls back to ``zero_spread_bandwidth``.
    """
    phis = np.array(
        [s.phi_deg if isinstance(s, Sample) else float(s) for s in samples_or_angles], dtype=np.float64
    )
    if phis.size < 2:
        raise ValueError(f"need at least two angles, got {phis.size}")
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    if bandwidth is None:
        sigma = float(np.std(phis, ddof=1))
        bandwidth = sigma * phis.size ** (-1 / 5) if sigma > 0 else zero_spread_bandwidth
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")

    n_bins = int(math.floor(phis.max() / bin_width)) + 1
    edges = bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(phis, bins=edges)

    lo, hi = phis.min() - 6 * bandwidth, phis.max() + 6 * bandwidth
    # odd count puts a node at the center of the span
    n_grid = max(513, 2 * int(math.ceil((hi - lo) / (bandwidth / 4))) + 1)
    grid = np.linspace(lo, hi, n_grid)
    density = np.zeros_like(grid)
    norm = 1.0 / (phis.size * bandwidth * math.sqrt(2 * math.pi))
    for start in range(0, phis.size, 1024):
        z = (grid[:, None] - phis[None, start : start + 1024]) / bandwidth
        density += np.exp(-0.5 * z * z).sum(axis=1)
    return PhiStats(edges, counts, grid, density * norm, float(bandwidth))


def write_manifest(path, samples: Iterable[Sample]) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict()) + "\n")


def iter_manifest(path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, record) for each non-blank line of a JSON-lines file."""
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def load_manifest(path) -> list[Sample]:
    samples = []
    for lineno, record in iter_manifest(path):
        try:
            samples.append(Sample.from_dict(record))
        except KeyError as exc:
            raise ManifestError(f"{path}:{lineno}: missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
    if not samples:
        raise ManifestError(f"{path}: manifest is empty")
    return samples


def save_stats_csv(stats: PhiStats, directory) -> tuple[Path, Path]:
    directory = Path(directory)
    hist_path, kde_path = directory / "phi_hist.csv", directory / "phi_kde.csv"
    dens = stats.histogram_density()
    with open(hist_path, "w") as fh:
        fh.write("bin_left_deg,bin_right_deg,count,density\n")
        for i, c in enumerate(stats.counts):
            left, right = float(stats.bin_edges[i]), float(stats.bin_edges[i + 1])
            fh.write(f"{left!r},{right!r},{int(c)},{float(dens[i])!r}\n")
    with open(kde_path, "w") as fh:
        fh.write("angle_deg,density\n")
        for a, d in zip(stats.grid, stats.density):
            fh.write(f"{float(a)!r},{float(d)!r}\n")
    return hist_path, kde_path
