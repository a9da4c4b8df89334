"""Input validation helpers.

Every public entry point funnels its array arguments through one of
these checkers.  They canonicalize dtype/layout and raise
:class:`~pseudomask.exceptions.ValidationError` with a message naming
the offending property, so failures surface where the bad data entered
rather than deep inside a kernel.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .palette import IGNORE_LABEL

__all__ = [
    "check_cam_array",
    "check_class_ids",
    "check_rgb_image",
    "check_prob_volume",
    "check_label_map",
    "check_loss_map",
]


def check_cam_array(data) -> np.ndarray:
    """Validate a C×H×W activation volume; returns a float64 copy."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError(f"CAM array must be 3-D (C,H,W), got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ValidationError(f"CAM array has an empty axis: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("CAM array contains NaN or infinite entries")
    if arr.min() < 0:
        raise ValidationError("CAM array contains negative activations")
    return arr


def check_class_ids(class_ids, channels: int, num_classes: int | None = None) -> list[int]:
    ids = [int(c) for c in class_ids]
    if len(ids) != channels:
        raise ValidationError(
            f"class_ids length {len(ids)} does not match channel count {channels}"
        )
    if len(set(ids)) != len(ids):
        raise ValidationError(f"class_ids contains duplicates: {ids}")
    for c in ids:
        if c < 1:
            raise ValidationError(f"class id {c} is reserved (0 = background)")
        if num_classes is not None and c >= num_classes:
            raise ValidationError(f"class id {c} out of range [1, {num_classes - 1}]")
        if c >= IGNORE_LABEL:
            raise ValidationError(f"class id {c} collides with the ignore label")
    return ids


def check_rgb_image(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"image must be H×W×3, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"image must be uint8, got dtype {arr.dtype}")
    return arr


def check_prob_volume(q) -> np.ndarray:
    """Validate a K×H×W array of probability-like scores in [0, 1]."""
    arr = np.asarray(q, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError(f"score volume must be 3-D (K,H,W), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("score volume contains NaN or infinite entries")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("score volume has entries outside [0, 1]")
    return arr


def check_label_map(labels, num_classes: int | None = None) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValidationError(f"label map must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"label map must be integer, got dtype {arr.dtype}")
    if arr.min() < 0 or arr.max() > IGNORE_LABEL:
        raise ValidationError("label map has entries outside [0, 255]")
    if num_classes is not None:
        bad = (arr >= num_classes) & (arr != IGNORE_LABEL)
        if bad.any():
            raise ValidationError(
                f"label map has {int(bad.sum())} entries >= num_classes={num_classes}"
            )
    return arr.astype(np.uint8, copy=False)


def check_loss_map(values, valid_mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Validate per-pixel losses plus an optional validity mask."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"loss map must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("loss map contains NaN or infinite entries")
    if arr.min() < 0:
        raise ValidationError("loss map contains negative entries")
    if valid_mask is None:
        mask = np.ones(arr.shape, dtype=bool)
    else:
        mask = np.asarray(valid_mask)
        if mask.shape != arr.shape:
            raise ValidationError(
                f"valid mask shape {mask.shape} does not match loss map {arr.shape}"
            )
        mask = mask.astype(bool)
    return arr, mask
