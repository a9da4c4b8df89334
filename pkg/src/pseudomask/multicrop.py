"""Multi-scale crop proposals, crop-level labels, and CAM fusion.

An image is resized over a scale sweep and tiled with fixed-size
windows at a fixed stride; trailing windows are shifted inward so the
tiling covers every pixel without padding.  A crop inherits a class
when it either contains more than ``fg_cover_frac`` of that class's
pixels or the class fills more than ``crop_area_frac`` of the crop
(both comparisons strict).  Per-crop CAMs are fused back to the
original canvas by averaging, with a coverage counter so overlaps do
not double-count.

Windows are (x0, y0, x1, y1) in resized-image pixels; image sizes are
(height, width).  CAM rescaling is bilinear, mask rescaling nearest:
activations are continuous scores, labels are categorical.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .cam import CamTensor
from .exceptions import ValidationError
from .palette import IGNORE_LABEL

__all__ = [
    "CropSpec",
    "CropProposal",
    "default_scales",
    "generate_crops",
    "label_crop",
    "fuse_crop_cams",
    "sample_crops",
    "resize_cam_bilinear",
    "resize_mask_nearest",
    "resized_dims",
]


def default_scales() -> tuple[float, ...]:
    return tuple(0.75 + 0.25 * i for i in range(10))


@dataclass(frozen=True)
class CropSpec:
    scales: tuple[float, ...] = field(default_factory=default_scales)
    crop_size: int = 448
    stride: int = 300
    fg_cover_frac: float = 0.10
    crop_area_frac: float = 0.10

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        if not scales or any(s <= 0 for s in scales):
            raise ValidationError(f"scales must all be > 0, got {scales}")
        if list(scales) != sorted(scales):
            raise ValidationError(f"scales must be ascending, got {scales}")
        if not 0 < self.stride <= self.crop_size:
            raise ValidationError(
                f"stride must be in (0, crop_size={self.crop_size}], got {self.stride}"
            )
        object.__setattr__(self, "scales", scales)


@dataclass(frozen=True)
class CropProposal:
    scale: float
    window: tuple[int, int, int, int]  # x0, y0, x1, y1 in resized px
    labels: frozenset[int] = frozenset()


def resized_dims(image_dims: tuple[int, int], scale: float) -> tuple[int, int]:
    h, w = image_dims
    return max(1, int(round(h * scale))), max(1, int(round(w * scale)))


def _axis_starts(length: int, crop: int, stride: int) -> list[int]:
    if length <= crop:
        return [0]
    starts = list(range(0, length - crop + 1, stride))
    if starts[-1] != length - crop:
        starts.append(length - crop)  # snap the last window to the border
    return starts


def generate_crops(image_dims: tuple[int, int], spec: CropSpec | None = None
                   ) -> list[CropProposal]:
    """All windows of the scale sweep, unlabeled, in deterministic order."""
    spec = spec if spec is not None else CropSpec()
    h, w = image_dims
    if h < 1 or w < 1:
        raise ValidationError(f"image dims must be >= 1, got {image_dims}")
    proposals = []
    for scale in spec.scales:
        rh, rw = resized_dims(image_dims, scale)
        ch, cw = min(spec.crop_size, rh), min(spec.crop_size, rw)
        for y0 in _axis_starts(rh, ch, spec.stride):
            for x0 in _axis_starts(rw, cw, spec.stride):
                proposals.append(CropProposal(scale, (x0, y0, x0 + cw, y0 + ch)))
    return proposals


def label_crop(crop: CropProposal, base_mask: np.ndarray,
               spec: CropSpec | None = None) -> set[int]:
    """Foreground classes the crop should be tagged with.

    ``base_mask`` must already be resized to the crop's scale.  A class
    is positive when the window holds more than ``fg_cover_frac`` of
    the class's pixels, or the class fills more than ``crop_area_frac``
    of the window.
    """
    spec = spec if spec is not None else CropSpec()
    mask = np.asarray(base_mask)
    x0, y0, x1, y1 = crop.window
    if not (0 <= x0 < x1 <= mask.shape[1] and 0 <= y0 < y1 <= mask.shape[0]):
        raise ValidationError(f"window {crop.window} outside mask {mask.shape}")
    inside = mask[y0:y1, x0:x1]
    area = inside.size
    labels = set()
    for cls in np.unique(mask):
        if cls == 0 or cls == IGNORE_LABEL:
            continue
        total = int((mask == cls).sum())
        covered = int((inside == cls).sum())
        if total and covered / total > spec.fg_cover_frac:
            labels.add(int(cls))
        elif covered / area > spec.crop_area_frac:
            labels.add(int(cls))
    return labels


def resize_cam_bilinear(volume: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    vol = np.asarray(volume, dtype=np.float64)
    if vol.shape[1:] == (out_h, out_w):
        return vol.copy()
    out = np.empty((vol.shape[0], out_h, out_w))
    for c in range(vol.shape[0]):
        plane = Image.fromarray(vol[c].astype(np.float32), mode="F")
        out[c] = np.asarray(plane.resize((out_w, out_h), Image.BILINEAR),
                            dtype=np.float64)
    return np.maximum(out, 0.0)


def resize_mask_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    arr = np.asarray(mask, dtype=np.uint8)
    if arr.shape == (out_h, out_w):
        return arr.copy()
    img = Image.fromarray(arr, mode="L")
    return np.asarray(img.resize((out_w, out_h), Image.NEAREST), dtype=np.uint8)


def fuse_crop_cams(crops: list[tuple[CropProposal, CamTensor]],
                   target_dims: tuple[int, int]) -> CamTensor:
    """Average per-crop CAMs back onto the original canvas.

    Every crop must carry the same class_ids sequence.  Each crop CAM
    is mapped through its window to original coordinates (bilinear),
    accumulated, and divided by per-pixel coverage; pixels no window
    touched stay 0.
    """
    if not crops:
        raise ValidationError("no crops to fuse")
    h, w = target_dims
    class_ids = crops[0][1].class_ids
    for _, cam in crops:
        if cam.class_ids != class_ids:
            raise ValidationError(
                f"crops disagree on class universe: {cam.class_ids} vs {class_ids}"
            )
    acc = np.zeros((len(class_ids), h, w))
    cover = np.zeros((h, w), dtype=np.int64)
    for prop, cam in crops:
        x0, y0, x1, y1 = prop.window
        if (cam.height, cam.width) != (y1 - y0, x1 - x0):
            raise ValidationError(
                f"crop CAM {cam.data.shape} does not match window {prop.window}"
            )
        rh, rw = resized_dims(target_dims, prop.scale)
        tx0, tx1 = (x0 * w) // rw, -((-x1 * w) // rw)
        ty0, ty1 = (y0 * h) // rh, -((-y1 * h) // rh)
        patch = resize_cam_bilinear(cam.data, ty1 - ty0, tx1 - tx0)
        acc[:, ty0:ty1, tx0:tx1] += patch
        cover[ty0:ty1, tx0:tx1] += 1
    seen = cover > 0
    acc[:, seen] /= cover[seen]
    return CamTensor(data=acc, class_ids=list(class_ids))


def sample_crops(proposals: list[CropProposal], k: int, seed: int
                 ) -> list[CropProposal]:
    """Seeded without-replacement selection of training crops."""
    if k < 0 or k > len(proposals):
        raise ValidationError(
            f"cannot sample {k} of {len(proposals)} proposals"
        )
    return random.Random(seed).sample(proposals, k)
