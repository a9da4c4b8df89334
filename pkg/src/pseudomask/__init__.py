"""CAM-to-pseudo-mask generation and utilization toolkit.

The library turns multi-channel class-activation volumes plus RGB
images into single-label pseudo-masks (adaptive smoothing, dense-CRF
refinement, proportional label assignment) and provides the training
side utilities that consume them (loss damping for noisy labels,
multi-crop proposals, cyclic mask updates, mIoU evaluation).

Core algorithm stages follow the scikit-learn estimator conventions
(constructor hyperparameters, ``get_params``/``set_params``, stateless
``fit``), so they compose with that ecosystem's tooling; file I/O,
tiling and orchestration are plain functions.
"""

from .cam import (
    CamTensor,
    CvsSmoother,
    assemble_unary,
    background_map,
    channel_exponents,
    coefficient_of_variation,
    cvs_smooth,
    foreground_values,
    normalize,
)
from .crf import (
    DenseCrf,
    build_unary,
    crf_refine,
    mean_field_exact,
    mean_field_fast,
)
from .cycle import CommandPredictor, CycleState, run_cycle, should_update
from .evaluation import confusion, evaluate_directories, iou_per_class, miou
from .exceptions import (
    DegenerateChannelError,
    EmptyEvaluationError,
    EmptyLossError,
    FormatError,
    IoError,
    PredictorError,
    PseudomaskError,
    SizeError,
    ValidationError,
)
from .io import (
    decode_mask_png,
    encode_mask_png,
    load_cam_tensor,
    load_image,
    save_cam_tensor,
)
from .masks import (
    BaselineMaskGenerator,
    ProportionalMaskGenerator,
    baseline_mask,
    class_binary_mask,
    generate_ppmg,
    ppmg_assign,
    proportion_map,
)
from .multicrop import (
    CropProposal,
    CropSpec,
    fuse_crop_cams,
    generate_crops,
    label_crop,
    sample_crops,
)
from .palette import IGNORE_LABEL, LABEL_PALETTE, color_map
from .permutohedral import PermutohedralLattice
from .pus import PretendedUnderfitLoss, pus_clamp, pus_ignore, pus_loss, pus_pow

__version__ = "0.1.0"

__all__ = [
    "BaselineMaskGenerator", "CamTensor", "CommandPredictor", "CropProposal",
    "CropSpec", "CvsSmoother", "CycleState", "DegenerateChannelError",
    "DenseCrf", "EmptyEvaluationError", "EmptyLossError", "FormatError",
    "IGNORE_LABEL", "IoError", "LABEL_PALETTE", "PermutohedralLattice",
    "PredictorError", "PretendedUnderfitLoss", "ProportionalMaskGenerator",
    "PseudomaskError", "SizeError", "ValidationError", "assemble_unary",
    "background_map", "baseline_mask", "build_unary", "channel_exponents",
    "class_binary_mask", "coefficient_of_variation", "color_map", "confusion",
    "crf_refine", "cvs_smooth", "decode_mask_png", "encode_mask_png",
    "evaluate_directories", "foreground_values", "fuse_crop_cams",
    "generate_crops", "generate_ppmg", "iou_per_class", "label_crop",
    "load_cam_tensor", "load_image", "mean_field_exact", "mean_field_fast",
    "miou", "normalize", "ppmg_assign", "proportion_map", "pus_clamp",
    "pus_ignore", "pus_loss", "pus_pow", "run_cycle", "sample_crops",
    "save_cam_tensor", "should_update",
]
