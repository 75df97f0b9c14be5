"""3D pose evaluation: MPJPE, Procrustes-aligned MPJPE, PCK/AUC and relative-depth error."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AlignmentDegenerateError, SkeletonMismatchError
from .pose_geometry import check_pose

PCK_THRESHOLD_MM = 150.0
AUC_THRESHOLDS_MM = np.arange(0.0, 151.0, 5.0)


@dataclass(frozen=True)
class EvalReport:
    mpjpe_mm: float
    pa_mpjpe_mm: float
    pck_percent: float
    auc: float
    depth_error_mm: float | None = None
    n_samples: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_table(self) -> str:
        rows = [
            ("MPJPE (mm)", self.mpjpe_mm),
            ("PA-MPJPE (mm)", self.pa_mpjpe_mm),
            ("PCK@150mm (%)", self.pck_percent),
            ("AUC", self.auc),
            ("Depth error (mm)", self.depth_error_mm),
            ("Samples", self.n_samples),
        ]
        width = max(len(name) for name, _ in rows)
        lines = []
        for name, value in rows:
            if value is None:
                text = "n/a"
            elif isinstance(value, int):
                text = str(value)
            else:
                text = f"{value:.4f}"
            lines.append(f"{name:<{width}}  {text:>12}")
        return "\n".join(lines)


def _pair(pred, gt):
    pred, gt = check_pose(pred), check_pose(gt)
    if pred.shape != gt.shape:
        raise SkeletonMismatchError(f"pred has {pred.shape[0]} joints, gt has {gt.shape[0]}")
    return pred, gt


def root_align(pose) -> np.ndarray:
    pose = check_pose(pose)
    return pose - pose[0]


def joint_errors(pred, gt) -> np.ndarray:
    pred, gt = _pair(pred, gt)
    return np.linalg.norm(pred - gt, axis=1)


def mpjpe(pred, gt) -> float:
    """Mean joint distance after subtracting each pose's pelvis."""
    pred, gt = _pair(pred, gt)
    return float(joint_errors(root_align(pred), root_align(gt)).mean())


def procrustes_align(pred, gt) -> np.ndarray:
    """Similarity transform of ``pred`` (rotation, uniform scale, translation) closest to ``gt`` in least squares."""
    pred, gt = _pair(pred, gt)
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    X, Y = pred - mu_p, gt - mu_g
    sv_gt = np.linalg.svd(Y, compute_uv=False)
    if sv_gt[0] == 0 or sv_gt[1] <= 1e-9 * sv_gt[0]:
        raise AlignmentDegenerateError("ground truth joints are collinear")
    var_p = (X**2).sum()
    if var_p == 0:
        raise AlignmentDegenerateError("prediction collapses to a point")
    U, S, Vt = np.linalg.svd(X.T @ Y)
    D = np.ones(3)
    if np.linalg.det(U @ Vt) < 0:
        D[2] = -1.0
    R = (U * D) @ Vt  # maps row vectors: X @ R ~ Y
    scale = (S * D).sum() / var_p
    return scale * X @ R + mu_g


def pa_mpjpe(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float(joint_errors(procrustes_align(pred, gt), gt).mean())


def pck_auc(pred, gt, threshold: float = PCK_THRESHOLD_MM) -> tuple[float, float]:
    """PCK in percent at ``threshold`` and AUC in [0, 1] over 0..150 mm in 5 mm steps.

    Inputs are compared as given; root-align them first (see :func:`evaluate`).
    """
    err = joint_errors(pred, gt)
    pck = 100.0 * float(np.mean(err <= threshold))
    auc = float(np.mean([np.mean(err <= t) for t in AUC_THRESHOLDS_MM]))
    return pck, auc


def depth_error(pred_uvd, gt_uvd) -> float:
    """Mean absolute relative-depth difference over non-root joints."""
    pred_uvd, gt_uvd = _pair(pred_uvd, gt_uvd)
    if pred_uvd.shape[0] < 2:
        raise SkeletonMismatchError("depth error needs at least one non-root joint")
    err = np.abs(pred_uvd[1:, 2] - gt_uvd[1:, 2])
    # sequential sum: np.mean's pairwise blocking can differ in the last bit
    return float(np.cumsum(err)[-1] / err.size)


def evaluate(preds, gts, pred_uvds=None, gt_uvds=None) -> EvalReport:
    """Average every metric over a batch of (J, 3) poses."""
    if len(preds) != len(gts):
        raise SkeletonMismatchError(f"{len(preds)} predictions for {len(gts)} ground truths")
    if len(preds) == 0:
        raise ValueError("nothing to evaluate")
    m, pa, pck, auc = [], [], [], []
    for pred, gt in zip(preds, gts):
        m.append(mpjpe(pred, gt))
        pa.append(pa_mpjpe(pred, gt))
        p, a = pck_auc(root_align(pred), root_align(gt))
        pck.append(p)
        auc.append(a)
    depth = None
    if pred_uvds is not None and gt_uvds is not None:
        depth = float(np.mean([depth_error(p, g) for p, g in zip(pred_uvds, gt_uvds)]))
    return EvalReport(
        mpjpe_mm=float(np.mean(m)),
        pa_mpjpe_mm=float(np.mean(pa)),
        pck_percent=float(np.mean(pck)),
        auc=float(np.mean(auc)),
        depth_error_mm=depth,
        n_samples=len(preds),
    )
