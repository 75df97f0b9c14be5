"""``perscam`` command line: pipeline, scene, eval, stats.

Failures exit non-zero with a one-line JSON object ``{"error", "message"}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import (
    BBox,
    ImageSize,
    Intrinsics,
    crop_affine,
    crop_intrinsics,
    load_bbox,
    load_intrinsics,
    square_bbox,
)
from .errors import InvalidBBoxError, ManifestError, PerscamError
from .metrics import evaluate
from .pemap import pe_map
from .persrot import apply_homography, rotated_bbox, rotation_to_center
from .pose_geometry import check_pose
from .scene import (
    SceneConfig,
    generate,
    iter_manifest,
    phi_statistics,
    save_stats_csv,
    write_manifest,
)
from .warp import read_png, warp_image, write_png


@dataclass(frozen=True)
class PipelineConfig:
    crop_size: ImageSize = ImageSize(256, 256)
    padding_factor: float = 1.0
    fill_value: int = 0
    output_dir: Path = Path(".")

    def __post_init__(self):
        if self.crop_size.w != self.crop_size.h:
            raise ValueError("crop size must be square")
        if self.padding_factor < 1.0:
            raise ValueError(f"padding factor must be >= 1, got {self.padding_factor}")
        if not 0 <= self.fill_value <= 255:
            raise ValueError("fill value must be in [0, 255]")


def run_pipeline(image: np.ndarray, intrinsics: Intrinsics, bbox: BBox, config: PipelineConfig):
    """Rotate the subject onto the optical axis, crop, and encode the crop intrinsics.

    Returns ``(crop, pemap, meta)``. The crop is produced by a single warp
    with the composed homography ``A M``, which equals warping to the centered
    image and then cropping, without resampling twice.
    """
    h, w = image.shape[:2]
    box = square_bbox(bbox, config.padding_factor)
    lo, hi = box.corners.min(axis=0), box.corners.max(axis=0)
    if lo[0] < 0 or lo[1] < 0 or hi[0] > w or hi[1] > h:
        raise InvalidBBoxError(f"padded bbox [{lo[0]:g}, {lo[1]:g}, {hi[0]:g}, {hi[1]:g}] exceeds the {w}x{h} image")
    rot = rotation_to_center(intrinsics, box)
    rbox = rotated_bbox(box, rot.M)
    affine = crop_affine(rbox, config.crop_size)
    k_crop = crop_intrinsics(intrinsics, affine)
    H = affine.matrix @ rot.M
    crop = warp_image(image, H, config.crop_size, fill=config.fill_value)
    pemap = pe_map(k_crop, config.crop_size)
    center = apply_homography(H, [bbox.cu, bbox.cv])
    meta = {
        "image_size": [w, h],
        "crop_size": [config.crop_size.w, config.crop_size.h],
        "padding_factor": config.padding_factor,
        "intrinsics": intrinsics.to_dict(),
        "bbox": bbox.to_dict(),
        "bbox_square": box.to_dict(),
        "rotation": rot.to_dict(),
        "phi_deg": rot.phi_deg,
        "rotated_bbox": rbox.to_dict(),
        "crop_affine": affine.to_dict(),
        "crop_intrinsics": k_crop.to_dict(),
        "crop_homography": H.tolist(),
        "self_check": {
            "bbox_center_in_crop": center.tolist(),
            "crop_center_error_px": float(np.abs(center - config.crop_size.center).max()),
        },
    }
    return crop, pemap, meta


def cmd_pipeline(args) -> int:
    config = PipelineConfig(
        crop_size=ImageSize(args.crop_size, args.crop_size),
        padding_factor=args.padding,
        fill_value=args.fill,
        output_dir=Path(args.out),
    )
    image = read_png(args.image)
    crop, pemap, meta = run_pipeline(image, load_intrinsics(args.intrinsics), load_bbox(args.bbox), config)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_png(out / "crop.png", crop)
    pemap.save(out / "pe_map.pemap")
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"phi = {meta['phi_deg']:.4f} deg, wrote {out}/crop.png, pe_map.pemap, meta.json")
    return 0


def cmd_scene(args) -> int:
    config = SceneConfig(
        seed=args.seed,
        n_samples=args.n,
        f_range=tuple(args.f_range),
        image_size=ImageSize.parse(args.image_size),
        subject_distance_range=tuple(args.distance_range),
        subject_offset_range=tuple(args.offset_range),
        skeleton=args.skeleton,
        crop_size=ImageSize(args.crop_size, args.crop_size),
        padding=args.padding,
        placement=args.placement,
        phi_range_deg=tuple(args.phi_range),
    )
    samples = generate(config)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_manifest(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _pose_records(path, need_uvd: bool = False):
    xyz, uvd, ids = [], [], []
    for lineno, record in iter_manifest(path):
        try:
            xyz.append(check_pose(record["joints_xyz_mm"]))
            uvd.append(check_pose(record["joints_uvd"]) if "joints_uvd" in record else None)
        except KeyError as exc:
            raise ManifestError(f"{path}:{lineno}: missing key {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from None
        ids.append((lineno, record.get("index")))
    if not xyz:
        raise ManifestError(f"{path}: manifest is empty")
    return xyz, uvd, ids


def cmd_eval(args) -> int:
    pred_xyz, pred_uvd, pred_ids = _pose_records(args.pred)
    gt_xyz, gt_uvd, gt_ids = _pose_records(args.gt)
    if len(pred_xyz) != len(gt_xyz):
        raise ManifestError(f"{args.pred} has {len(pred_xyz)} records but {args.gt} has {len(gt_xyz)}")
    for (pl, pi), (gl, gi), p, g in zip(pred_ids, gt_ids, pred_xyz, gt_xyz):
        if pi is not None and gi is not None and pi != gi:
            raise ManifestError(f"{args.pred}:{pl}: index {pi} does not match {args.gt}:{gl} index {gi}")
        if p.shape != g.shape:
            raise ManifestError(f"{args.pred}:{pl}: {p.shape[0]} joints vs {g.shape[0]} in {args.gt}:{gl}")
    with_depth = all(u is not None for u in pred_uvd + gt_uvd)
    report = evaluate(
        pred_xyz, gt_xyz, pred_uvd if with_depth else None, gt_uvd if with_depth else None
    )
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        if args.format == "csv":
            fields = ["mpjpe_mm", "pa_mpjpe_mm", "pck_percent", "auc", "depth_error_mm", "n_samples"]
            values = ["" if getattr(report, k) is None else repr(getattr(report, k)) for k in fields]
            Path(args.out).write_text(",".join(fields) + "\n" + ",".join(values) + "\n")
        else:
            Path(args.out).write_text(report.to_json() + "\n")
    print(report.to_table())
    return 0


def cmd_stats(args) -> int:
    phis = []
    for lineno, record in iter_manifest(args.manifest):
        try:
            phis.append(float(np.degrees(float(record["rotation"]["phi"]))))
        except (KeyError, TypeError, ValueError):
            raise ManifestError(f"{args.manifest}:{lineno}: record needs a numeric rotation.phi") from None
    stats = phi_statistics(phis, bandwidth=args.bandwidth, bin_width=args.bin_width)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        payload = {
            "bandwidth_deg": stats.bandwidth,
            "mode_deg": stats.mode,
            "bin_edges_deg": stats.bin_edges.tolist(),
            "counts": stats.counts.tolist(),
            "kde_angle_deg": stats.grid.tolist(),
            "kde_density": stats.density.tolist(),
        }
        (out / "phi_stats.json").write_text(json.dumps(payload) + "\n")
    else:
        save_stats_csv(stats, out)
    print(f"{len(phis)} angles, mode {stats.mode:.3f} deg, bandwidth {stats.bandwidth:.3f} deg -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perscam", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="rotate, crop and encode one image")
    p.add_argument("image", help="8-bit gray or RGB PNG")
    p.add_argument("--intrinsics", required=True, help='JSON {"f", "cx", "cy"}')
    p.add_argument("--bbox", required=True, help='JSON {"cu", "cv", "w", "h"}')
    p.add_argument("--crop-size", type=int, default=256)
    p.add_argument("--padding", type=float, default=1.0)
    p.add_argument("--fill", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("scene", help="generate a synthetic JSON-lines manifest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--out", required=True, help="manifest path (.jsonl)")
    p.add_argument("--image-size", default="1920x1080")
    p.add_argument("--f-range", type=float, nargs=2, default=[800.0, 2000.0])
    p.add_argument("--distance-range", type=float, nargs=2, default=[3000.0, 8000.0])
    p.add_argument("--offset-range", type=float, nargs=2, default=[-1500.0, 1500.0])
    p.add_argument("--phi-range", type=float, nargs=2, default=[0.0, 30.0])
    p.add_argument("--placement", choices=["frustum", "centered", "angular"], default="frustum")
    p.add_argument("--skeleton", choices=["h36m14", "mpi17"], default="h36m14")
    p.add_argument("--crop-size", type=int, default=256)
    p.add_argument("--padding", type=float, default=1.0)
    p.set_defaults(func=cmd_scene)

    p = sub.add_parser("eval", help="score predicted poses against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="report path")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="histogram and KDE of rotation angles")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bandwidth", type=float, default=None, help="KDE bandwidth in degrees (default: Scott)")
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PerscamError, ValueError, TypeError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
