"""File formats: CAM tensors (NPY + sidecar JSON), label PNGs, images.

Conventions:

* CAM tensors travel as NPY v1.0, little-endian ``<f4``, C-order, shape
  (C, H, W), with a sidecar ``<stem>.json`` holding
  ``{"class_ids": [...], "image_id": "<stem>"}``.
* Label maps travel as 8-bit indexed PNGs using the shared palette
  (label i -> palette entry i, 255 -> entry 255) and round-trip exactly.
* Input images are PNG or PPM, decoded to H×W×3 uint8.

Everything here touches only its own file handles; concurrent calls on
distinct paths are safe.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .cam import CamTensor
from .exceptions import FormatError, IoError, ValidationError
from .palette import LABEL_PALETTE
from .validation import check_label_map

__all__ = [
    "load_cam_tensor",
    "save_cam_tensor",
    "encode_mask_png",
    "decode_mask_png",
    "load_image",
    "save_image",
    "sidecar_path",
]

_NPY_MAGIC = b"\x93NUMPY"


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def load_cam_tensor(path) -> CamTensor:
    """Load a CAM tensor from ``<path>`` and its sidecar JSON."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(len(_NPY_MAGIC))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if magic != _NPY_MAGIC:
        raise FormatError(f"{path} is not an NPY file (bad magic {magic!r})")
    try:
        arr = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as exc:
        raise FormatError(f"{path} has a malformed NPY header: {exc}") from exc
    if arr.dtype.kind != "f" or arr.dtype.itemsize not in (4, 8):
        raise FormatError(f"{path} must be float32 or float64, got {arr.dtype}")
    side = sidecar_path(path)
    if not side.exists():
        raise FormatError(f"missing sidecar JSON {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{side} is not valid JSON: {exc}") from exc
    if "class_ids" not in meta:
        raise FormatError(f"{side} lacks a class_ids entry")
    return CamTensor(data=arr.astype(np.float64), class_ids=meta["class_ids"])


def save_cam_tensor(t: CamTensor, path) -> None:
    """Write ``t`` as little-endian float32 NPY plus sidecar JSON."""
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            np.save(fh, np.ascontiguousarray(t.data, dtype="<f4"))
        meta = {"class_ids": list(t.class_ids), "image_id": path.stem}
        sidecar_path(path).write_text(json.dumps(meta))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def encode_mask_png(labels: np.ndarray, path) -> None:
    """Write a label map as an 8-bit indexed PNG with the shared palette."""
    arr = check_label_map(labels)
    img = Image.fromarray(arr, mode="P")
    img.putpalette(LABEL_PALETTE.reshape(-1).tolist())
    try:
        img.save(Path(path), format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def decode_mask_png(path) -> np.ndarray:
    """Read an indexed PNG back into a uint8 label map."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise FormatError(f"{path} is not a PNG (format {img.format})")
            if img.mode != "P":
                raise FormatError(f"{path} is not an indexed PNG (mode {img.mode})")
            return np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise FormatError(f"{path} cannot be decoded: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def load_image(path) -> np.ndarray:
    """Load a PNG or PPM file as an H×W×3 uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.format not in ("PNG", "PPM"):
                raise FormatError(f"{path}: unsupported format {img.format}")
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise FormatError(f"{path} cannot be decoded: {exc}") from exc
    except OSError as exc:
        # PIL reports truncated image data as OSError during decode
        raise FormatError(f"{path} cannot be decoded: {exc}") from exc
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"{path} did not decode to H×W×3")
    return arr


def save_image(image: np.ndarray, path) -> None:
    """Write an H×W×3 uint8 array as PNG (test/fixture helper)."""
    try:
        Image.fromarray(image, mode="RGB").save(Path(path), format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
