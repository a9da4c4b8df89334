"""Segmentation evaluation: confusion matrices and mean IoU.

Pixels whose ground-truth label is the ignore value contribute to
nothing.  A class appears in the mean only if it occurs in the ground
truth or the prediction; absent classes are reported as NaN.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .exceptions import EmptyEvaluationError, ValidationError
from .io import decode_mask_png
from .palette import IGNORE_LABEL
from .validation import check_label_map

__all__ = [
    "confusion",
    "iou_per_class",
    "miou",
    "merge_confusions",
    "evaluate_directories",
]


def confusion(gt: np.ndarray, pred: np.ndarray, num_classes: int) -> np.ndarray:
    """num_classes×num_classes count matrix, rows = truth, cols = prediction."""
    g = check_label_map(gt)
    p = check_label_map(pred)
    if g.shape != p.shape:
        raise ValidationError(f"shape mismatch: gt {g.shape} vs pred {p.shape}")
    valid = g != IGNORE_LABEL
    g = g[valid].astype(np.int64)
    p = p[valid].astype(np.int64)
    if g.size and g.max() >= num_classes:
        raise ValidationError(f"ground-truth label {g.max()} >= num_classes")
    if p.size and p.max() >= num_classes:
        raise ValidationError(f"predicted label {p.max()} >= num_classes")
    counts = np.bincount(g * num_classes + p, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes)


def merge_confusions(matrices) -> np.ndarray:
    """Sum per-image confusion matrices (deterministic, order-free)."""
    out = None
    for m in matrices:
        out = m.copy() if out is None else out + m
    if out is None:
        raise ValidationError("no confusion matrices to merge")
    return out


def iou_per_class(cm: np.ndarray) -> np.ndarray:
    """IoU per class; NaN where the class is absent from gt and pred."""
    cm = np.asarray(cm, dtype=np.float64)
    diag = np.diag(cm)
    denom = cm.sum(axis=1) + cm.sum(axis=0) - diag
    ious = np.full(cm.shape[0], np.nan)
    present = denom > 0
    ious[present] = diag[present] / denom[present]
    return ious


def miou(cm: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean IoU over present classes, plus the per-class vector."""
    ious = iou_per_class(cm)
    present = ~np.isnan(ious)
    if not present.any():
        raise EmptyEvaluationError("no class present in gt or prediction")
    return float(ious[present].mean()), ious


def evaluate_directories(pred_dir, gt_dir, num_classes: int
                         ) -> tuple[float, np.ndarray, int]:
    """Aggregate mIoU of prediction PNGs against ground-truth PNGs.

    Directories are joined by file stem; every ground-truth mask must
    have a prediction.  Returns (miou, per-class IoU, image count).
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt_files = sorted(gt_dir.glob("*.png"))
    if not gt_files:
        raise ValidationError(f"no ground-truth masks in {gt_dir}")
    missing = [f.stem for f in gt_files if not (pred_dir / f.name).exists()]
    if missing:
        raise ValidationError(f"missing predictions for stems: {missing}")
    total = None
    for f in gt_files:
        cm = confusion(decode_mask_png(f), decode_mask_png(pred_dir / f.name),
                       num_classes)
        total = cm if total is None else total + cm
    score, ious = miou(total)
    return score, ious, len(gt_files)
