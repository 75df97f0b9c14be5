import json
import subprocess
import sys

import numpy as np
import pytest

from perscam.camera import BBox, ImageSize, Intrinsics
from perscam.cli import PipelineConfig, main as cli_main, run_pipeline
from perscam.errors import InvalidBBoxError
from perscam.pemap import PEMap
from perscam.persrot import RotationResult, rotate_pose
from perscam.pose_geometry import project, reconstruct_pose, scale_factor
from perscam.scene import SceneConfig, generate
from perscam.warp import read_png, write_png


@pytest.fixture
def scene_files(tmp_path, rng):
    img = rng.integers(0, 256, size=(480, 640, 3), dtype=np.uint8)
    write_png(tmp_path / "img.png", img)
    (tmp_path / "k.json").write_text(json.dumps({"f": 600.0, "cx": 320.0, "cy": 240.0}))
    (tmp_path / "box.json").write_text(json.dumps({"cu": 450.0, "cv": 150.0, "w": 120.0, "h": 160.0}))
    return tmp_path


def main(argv):
    return cli_main([str(a) for a in argv])


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "perscam", *map(str, args)], capture_output=True, text=True)


def test_centered_subject_needs_no_rotation(rng):
    img = rng.integers(0, 256, size=(480, 640), dtype=np.uint8)
    k = Intrinsics(600.0, 320.0, 240.0)
    crop, pemap, meta = run_pipeline(img, k, BBox(320.0, 240.0, 128.0, 100.0), PipelineConfig(crop_size=ImageSize(128, 128)))
    assert meta["phi_deg"] == 0.0
    assert np.array_equal(np.array(meta["rotation"]["M"]), np.eye(3))
    # unit-scale crop of a centered box is a plain sub-raster
    assert np.array_equal(crop, img[176:304, 256:384])
    assert pemap.data.shape == (128, 128, 2)


def test_off_center_self_check(rng):
    img = rng.integers(0, 256, size=(1080, 1920, 3), dtype=np.uint8)
    k = Intrinsics(1000.0, 960.0, 540.0)
    _, _, meta = run_pipeline(img, k, BBox(1600.0, 300.0, 300.0, 400.0), PipelineConfig(padding_factor=1.2))
    assert meta["phi_deg"] > 10
    assert meta["self_check"]["crop_center_error_px"] <= 1e-3
    assert meta["bbox_square"]["w"] == meta["bbox_square"]["h"] == 480.0


def test_bbox_outside_image_rejected(rng):
    img = np.zeros((100, 100), dtype=np.uint8)
    with pytest.raises(InvalidBBoxError):
        run_pipeline(img, Intrinsics(100.0, 50.0, 50.0), BBox(90.0, 50.0, 40.0, 40.0), PipelineConfig())


def test_pipeline_command_is_deterministic(scene_files):
    d = scene_files
    outputs = []
    for name in ("o1", "o2"):
        assert main(["pipeline", d / "img.png", "--intrinsics", d / "k.json", "--bbox", d / "box.json", "--out", d / name]) == 0
        outputs.append([(d / name / f).read_bytes() for f in ("crop.png", "pe_map.pemap", "meta.json")])
    assert outputs[0] == outputs[1]
    assert read_png(d / "o1" / "crop.png").shape == (256, 256, 3)
    meta = json.loads((d / "o1" / "meta.json").read_text())
    pem = PEMap.load(d / "o1" / "pe_map.pemap")
    kc = meta["crop_intrinsics"]
    assert pem.x[0, 0] == np.float32((0 - kc["cx"]) / kc["f"])


def test_meta_is_enough_to_reconstruct(rng):
    s = generate(SceneConfig(seed=21, n_samples=1, image_size=ImageSize(1920, 1080)))[0]
    img = rng.integers(0, 256, size=(1080, 1920), dtype=np.uint8)
    _, _, meta = run_pipeline(img, s.intrinsics, s.bbox, PipelineConfig())
    meta = json.loads(json.dumps(meta))
    kc = Intrinsics.from_dict(meta["crop_intrinsics"])
    rot = RotationResult.from_dict(meta["rotation"])
    rotated = rotate_pose(rot.R, s.pose_xyz)
    uvd = project(kc, rotated)
    assert np.abs(reconstruct_pose(kc, rot.R, uvd, scale_factor(kc, rotated)) - s.pose_xyz).max() <= 1e-6
    assert np.abs(uvd - s.pose_uvd_crop).max() <= 1e-6


def test_scene_command_is_deterministic(tmp_path):
    for name in ("a.jsonl", "b.jsonl"):
        assert main(["scene", "--seed", "7", "--n", "25", "--out", tmp_path / name]) == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert len((tmp_path / "a.jsonl").read_text().splitlines()) == 25


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_eval_ground_truth_against_itself(tmp_path, capsys, fmt):
    main(["scene", "--seed", "7", "--n", "10", "--out", tmp_path / "gt.jsonl"])
    assert main(["eval", "--pred", tmp_path / "gt.jsonl", "--gt", tmp_path / "gt.jsonl", "--out", tmp_path / "r", "--format", fmt]) == 0
    text = (tmp_path / "r").read_text()
    if fmt == "json":
        report = json.loads(text)
        assert report["mpjpe_mm"] == 0.0 and report["depth_error_mm"] == 0.0
        assert report["pck_percent"] == 100.0 and report["auc"] == 1.0 and report["n_samples"] == 10
    else:
        header, row = text.splitlines()
        assert header.split(",")[0] == "mpjpe_mm" and row.split(",")[0] == "0.0"
    assert "MPJPE" in capsys.readouterr().out


def test_eval_rejects_mismatched_manifests(tmp_path, capsys):
    main(["scene", "--seed", "1", "--n", "3", "--out", tmp_path / "a.jsonl"])
    main(["scene", "--seed", "1", "--n", "4", "--out", tmp_path / "b.jsonl"])
    capsys.readouterr()
    assert main(["eval", "--pred", tmp_path / "a.jsonl", "--gt", tmp_path / "b.jsonl"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ManifestError"


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_stats_on_centered_manifest(tmp_path, fmt):
    main(["scene", "--seed", "2", "--n", "30", "--placement", "centered", "--out", tmp_path / "c.jsonl"])
    assert main(["stats", tmp_path / "c.jsonl", "--out", tmp_path / "s", "--format", fmt]) == 0
    if fmt == "csv":
        rows = (tmp_path / "s" / "phi_hist.csv").read_text().splitlines()[1:]
        assert len(rows) == 1 and rows[0].split(",")[2] == "30"
        assert (tmp_path / "s" / "phi_kde.csv").exists()
    else:
        payload = json.loads((tmp_path / "s" / "phi_stats.json").read_text())
        assert payload["counts"] == [30] and payload["mode_deg"] == 0.0


def test_errors_are_json_on_stderr(tmp_path):
    (tmp_path / "k.json").write_text(json.dumps({"f": -1.0, "cx": 0.0, "cy": 0.0}))
    (tmp_path / "box.json").write_text(json.dumps({"cu": 1.0, "cv": 1.0, "w": 1.0, "h": 1.0}))
    write_png(tmp_path / "img.png", np.zeros((4, 4), dtype=np.uint8))
    proc = run_cli("pipeline", tmp_path / "img.png", "--intrinsics", tmp_path / "k.json", "--bbox", tmp_path / "box.json", "--out", tmp_path / "o")
    assert proc.returncode != 0
    err = json.loads(proc.stderr.strip().splitlines()[-1])
    assert err["error"] == "InvalidIntrinsicsError" and "message" in err
    proc = run_cli("stats", tmp_path / "missing.jsonl", "--out", tmp_path / "s")
    assert proc.returncode != 0 and json.loads(proc.stderr)["error"] == "FileNotFoundError"
