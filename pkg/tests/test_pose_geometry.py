import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perscam.camera import Intrinsics
from perscam.errors import BehindCameraError, InvalidRotationError, ManifestError, SkeletonMismatchError
from perscam.persrot import rodrigues, rotate_pose
from perscam.pose_geometry import (
    SKELETONS,
    check_pose,
    get_skeleton,
    load_pose_uvd,
    load_pose_xyz,
    project,
    reconstruct_pose,
    save_pose_uvd,
    save_pose_xyz,
    scale_factor,
    unrotate_pose,
    uvd_to_xyz,
)


def random_pose(rng, n=14, depth=5000.0):
    pose = rng.uniform(-800, 800, size=(n, 3))
    pose[0] = 0
    return pose + [rng.uniform(-1000, 1000), rng.uniform(-1000, 1000), depth]


def test_pelvis_on_axis_projects_to_principal_point():
    k = Intrinsics(640.0, 128.0, 128.0)
    pose = np.array([[0.0, 0.0, 4000.0], [100.0, -50.0, 4100.0]])
    uvd = project(k, pose)
    assert tuple(uvd[0]) == (128.0, 128.0, 0.0)
    assert uvd[1, 2] == 100.0


def test_project_matches_scalar_formula(rng):
    k = Intrinsics(640.0, 128.0, 128.0)
    pose = random_pose(rng)
    uvd = project(k, pose)
    for j, (x, y, z) in enumerate(pose.tolist()):
        assert uvd[j, 0] == 640.0 * x / z + 128.0
        assert uvd[j, 1] == 640.0 * y / z + 128.0
        assert uvd[j, 2] == z - pose[0, 2]


@settings(max_examples=100)
@given(st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_scaling_pose_keeps_pixels_and_scales_depth(lam, seed):
    k = Intrinsics(900.0, 300.0, 200.0)
    pose = random_pose(np.random.default_rng(seed))
    a, b = project(k, pose), project(k, lam * pose)
    assert np.abs(a[:, :2] - b[:, :2]).max() <= 1e-9
    assert np.abs(lam * a[:, 2] - b[:, 2]).max() <= 1e-9 * lam * 1000


def test_axial_translation_keeps_relative_depths_exactly(rng):
    # dyadic coordinates keep z_i + t exact, so the differences agree bit for bit
    k = Intrinsics(1000.0, 960.0, 540.0)
    pose = np.round(random_pose(rng) * 1024) / 1024
    for t in (512.0, 1234.5, 3000.25):
        shifted = pose + [0.0, 0.0, t]
        assert np.array_equal(project(k, pose)[:, 2], project(k, shifted)[:, 2])


def test_behind_camera_rejected():
    k = Intrinsics(500.0, 0.0, 0.0)
    with pytest.raises(BehindCameraError):
        project(k, [[0.0, 0.0, 100.0], [0.0, 0.0, 0.0]])
    with pytest.raises(BehindCameraError):
        uvd_to_xyz(k, [[0.0, 0.0, 0.0], [0.0, 0.0, -600.0]], 1.0)
    with pytest.raises(BehindCameraError):
        uvd_to_xyz(k, [[0.0, 0.0, 0.0]], 0.0)
    with pytest.raises(BehindCameraError):
        scale_factor(k, [[0.0, 0.0, -1.0]])


def test_uvd_to_xyz_at_principal_point():
    k = Intrinsics(640.0, 128.0, 128.0)
    xyz = uvd_to_xyz(k, [[128.0, 128.0, 0.0]], 7.5)
    assert tuple(xyz[0]) == (0.0, 0.0, 4800.0)


def test_uvd_to_xyz_forty_five_degree_ray():
    k = Intrinsics(640.0, 128.0, 128.0)
    xyz = uvd_to_xyz(k, [[768.0, 128.0, 0.0]], 7.5)
    assert xyz[0, 0] == xyz[0, 2] == 4800.0


def test_pelvis_depth_is_scale_times_focal(rng):
    k = Intrinsics(713.0, 100.0, 120.0)
    uvd = project(k, random_pose(rng))
    assert uvd_to_xyz(k, uvd, 6.25)[0, 2] == 6.25 * 713.0


def test_round_trip_with_true_scale(rng):
    worst = 0.0
    for _ in range(500):
        k = Intrinsics(rng.uniform(300, 3000), rng.uniform(0, 256), rng.uniform(0, 256))
        pose = random_pose(rng, depth=rng.uniform(2000, 9000))
        back = uvd_to_xyz(k, project(k, pose), scale_factor(k, pose))
        worst = max(worst, np.abs(back - pose).max() / np.abs(pose).max())
    assert worst <= 1e-6 / 1000


def test_unrotate_inverts_rotate(rng):
    pose = random_pose(rng)
    assert np.array_equal(unrotate_pose(np.eye(3), pose), pose)
    for _ in range(20):
        axis = rng.normal(size=3)
        R = rodrigues(axis / np.linalg.norm(axis), rng.uniform(0, np.pi))
        assert np.abs(unrotate_pose(R, rotate_pose(R, pose)) - pose).max() <= 1e-9
    with pytest.raises(InvalidRotationError):
        unrotate_pose(2 * np.eye(3), pose)


def test_reconstruct_pose_from_crop_labels(rng):
    k = Intrinsics(1200.0, 128.0, 128.0)
    R = rodrigues(np.array([0.0, -1.0, 0.0]), 0.3)
    pose = random_pose(rng)
    rotated = rotate_pose(R, pose)
    uvd = project(k, rotated)
    back = reconstruct_pose(k, R, uvd, scale_factor(k, rotated))
    assert np.abs(back - pose).max() <= 1e-6


def test_skeleton_definitions():
    assert SKELETONS["h36m14"].n_joints == 14
    assert SKELETONS["mpi17"].n_joints == 17
    for sk in SKELETONS.values():
        assert sk.joints[0] == "pelvis" and sk.parents[0] == -1
        assert all(p < j for j, p in enumerate(sk.parents) if p >= 0)
        assert len(sk.bones) == sk.n_joints - 1
    with pytest.raises(SkeletonMismatchError):
        get_skeleton("coco")


def test_bone_lengths():
    sk = get_skeleton("h36m14")
    pose = np.zeros((14, 3))
    pose[1] = [3.0, 4.0, 0.0]
    lengths = sk.bone_lengths(pose)
    assert lengths[0] == 5.0 and lengths[1] == 5.0
    with pytest.raises(SkeletonMismatchError):
        sk.bone_lengths(np.zeros((17, 3)))


def test_check_pose_rejects_bad_shapes():
    with pytest.raises(SkeletonMismatchError):
        check_pose(np.zeros((14, 2)))
    with pytest.raises(ValueError):
        check_pose([[0.0, np.inf, 1.0]])


def test_pose_files(tmp_path, rng):
    pose = random_pose(rng, n=17)
    save_pose_xyz(tmp_path / "p.json", "mpi17", pose)
    name, back = load_pose_xyz(tmp_path / "p.json")
    assert name == "mpi17" and np.array_equal(back, pose)
    save_pose_uvd(tmp_path / "u.json", pose, 3.5)
    uvd, s = load_pose_uvd(tmp_path / "u.json")
    assert s == 3.5 and np.array_equal(uvd, pose)
    with pytest.raises(SkeletonMismatchError):
        save_pose_xyz(tmp_path / "q.json", "h36m14", pose)
    (tmp_path / "bad.json").write_text(json.dumps({"skeleton": "mpi17"}))
    with pytest.raises(ManifestError):
        load_pose_xyz(tmp_path / "bad.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ManifestError):
        load_pose_uvd(tmp_path / "broken.json")
