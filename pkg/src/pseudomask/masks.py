"""Pseudo-mask projection: baseline CRF+argmax and the proportional pipeline.

Two generators turn a CAM plus its RGB image into a single-label map:

* :class:`BaselineMaskGenerator` — normalize, synthesize a background
  channel, refine the stacked unary with one multi-class CRF, argmax.
* :class:`ProportionalMaskGenerator` — smooth each normalized channel,
  run an independent two-label CRF per class to get binary class masks,
  then assign each contested pixel to the class for which it carries
  the largest *share of that class's total activation* rather than the
  largest raw score.  The CRF posterior decides membership only; the
  proportions are computed from the normalized CAM.

Both are deterministic: ties in the proportional assignment go to the
lowest class id.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .cam import CamTensor, assemble_unary, background_map, cvs_smooth, normalize
from .crf import DenseCrf
from .exceptions import ValidationError
from .validation import check_rgb_image

__all__ = [
    "class_binary_mask",
    "proportion_map",
    "ppmg_assign",
    "baseline_mask",
    "generate_ppmg",
    "BaselineMaskGenerator",
    "ProportionalMaskGenerator",
]

_NO_CANDIDATE = 256  # above any class id, used for the tie-break reduction


def class_binary_mask(
    smoothed_channel: np.ndarray,
    image: np.ndarray,
    *,
    alpha: float = 11.0,
    fg_threshold: float = 0.05,
    crf: DenseCrf | None = None,
) -> np.ndarray:
    """Binary foreground mask for one smoothed channel.

    Builds a two-channel problem (exponential background vs. the
    channel itself), refines it with the CRF, and keeps pixels whose
    foreground posterior is strictly above ``fg_threshold``.
    """
    chan = np.asarray(smoothed_channel, dtype=np.float64)
    if chan.ndim != 2:
        raise ValidationError(f"channel must be 2-D, got shape {chan.shape}")
    crf = crf if crf is not None else DenseCrf()
    bg = background_map(chan[None], alpha)
    posterior = crf.refine(np.stack([bg, chan]), image)
    return posterior[1] > fg_threshold


def proportion_map(norm: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Share of each pixel in its class's masked activation total.

    ``p[c] = norm[c] / sum(norm[c] * masks[c])``; a class whose masked
    activation sums to zero gets an all-zero channel (the class is
    effectively dropped rather than raising).
    """
    norm = np.asarray(norm, dtype=np.float64)
    masks = np.asarray(masks)
    if norm.shape != masks.shape:
        raise ValidationError(
            f"normalized CAM {norm.shape} and masks {masks.shape} disagree"
        )
    denom = (norm * masks).sum(axis=(1, 2))
    out = np.zeros_like(norm)
    live = denom > 0
    out[live] = norm[live] / denom[live, None, None]
    return out


def ppmg_assign(masks: np.ndarray, p: np.ndarray, class_ids) -> np.ndarray:
    """Per-pixel label from masked proportions.

    A pixel's candidates are the classes whose binary mask covers it;
    no candidate means background (0); among candidates the largest
    proportion wins, exact ties going to the lowest class id.
    """
    masks = np.asarray(masks).astype(bool)
    p = np.asarray(p, dtype=np.float64)
    ids = np.asarray(list(class_ids), dtype=np.int64)
    if masks.shape != p.shape or masks.shape[0] != len(ids):
        raise ValidationError("masks, proportions and class_ids disagree in shape")
    scores = np.where(masks, p, -np.inf)
    best = scores.max(axis=0)
    tied = (scores == best) & masks
    id_grid = np.where(tied, ids[:, None, None], _NO_CANDIDATE)
    labels = id_grid.min(axis=0)
    labels[~masks.any(axis=0)] = 0
    return labels.astype(np.uint8)


def baseline_mask(
    cam: CamTensor,
    image: np.ndarray,
    *,
    alpha: float = 11.0,
    crf: DenseCrf | None = None,
) -> np.ndarray:
    """Normalize, stack the background channel, CRF, argmax."""
    img = check_rgb_image(image)
    _check_pairing(cam, img)
    crf = crf if crf is not None else DenseCrf()
    unary = assemble_unary(normalize(cam.data), alpha)
    channel = crf.predict(unary, img)
    lut = np.concatenate([[0], np.asarray(cam.class_ids)]).astype(np.uint8)
    return lut[channel]


def generate_ppmg(
    cam: CamTensor,
    image: np.ndarray,
    *,
    alpha: float = 11.0,
    fg_threshold: float = 0.05,
    cvs_threshold: float = 0.05,
    cvs_scale: float = 0.3,
    cvs_exponent_floor: float = 0.05,
    crf: DenseCrf | None = None,
) -> np.ndarray:
    """Full proportional pipeline for one CAM/image pair.

    Normalize, smooth, per-class binary mask via independent CRFs,
    proportions from the *normalized* (not smoothed) CAM, assignment.
    """
    img = check_rgb_image(image)
    _check_pairing(cam, img)
    crf = crf if crf is not None else DenseCrf()
    norm = normalize(cam.data)
    smoothed = cvs_smooth(norm, cvs_threshold, cvs_scale, cvs_exponent_floor)
    masks = np.stack([
        class_binary_mask(smoothed[c], img, alpha=alpha,
                          fg_threshold=fg_threshold, crf=crf)
        for c in range(cam.channels)
    ])
    return ppmg_assign(masks, proportion_map(norm, masks), cam.class_ids)


def _check_pairing(cam: CamTensor, image: np.ndarray) -> None:
    if (cam.height, cam.width) != image.shape[:2]:
        raise ValidationError(
            f"CAM {cam.data.shape} and image {image.shape} disagree in size"
        )


class BaselineMaskGenerator(BaseEstimator):
    """CRF+argmax projection as an estimator.

    Parameters
    ----------
    alpha : float, default=11.0
        Exponent of the synthesized background channel.
    crf : DenseCrf or None
        Refinement stage; None means a default-configured DenseCrf.
    """

    def __init__(self, alpha: float = 11.0, crf: DenseCrf | None = None):
        self.alpha = alpha
        self.crf = crf

    def fit(self, X=None, y=None):
        return self

    def predict(self, cam: CamTensor, image: np.ndarray) -> np.ndarray:
        """H×W uint8 label map (0 = background)."""
        return baseline_mask(cam, image, alpha=self.alpha, crf=self.crf)


class ProportionalMaskGenerator(BaseEstimator):
    """Proportional projection with adaptive smoothing as an estimator.

    Parameters
    ----------
    alpha : float, default=11.0
        Background exponent shared by every per-class CRF problem.
    fg_threshold : float, default=0.05
        Foreground-posterior cut for class membership (strictly above).
    cvs_threshold, cvs_scale, cvs_exponent_floor : float
        Smoothing parameters, see :class:`~pseudomask.cam.CvsSmoother`.
    crf : DenseCrf or None
        Per-class refinement stage; one configuration for all classes.
    tie_break : str
        Only ``"lowest-class-id"`` is supported; the parameter exists
        so configurations state the rule explicitly.
    """

    def __init__(self, alpha: float = 11.0, fg_threshold: float = 0.05,
                 cvs_threshold: float = 0.05, cvs_scale: float = 0.3,
                 cvs_exponent_floor: float = 0.05,
                 crf: DenseCrf | None = None,
                 tie_break: str = "lowest-class-id"):
        self.alpha = alpha
        self.fg_threshold = fg_threshold
        self.cvs_threshold = cvs_threshold
        self.cvs_scale = cvs_scale
        self.cvs_exponent_floor = cvs_exponent_floor
        self.crf = crf
        self.tie_break = tie_break

    def fit(self, X=None, y=None):
        if self.tie_break != "lowest-class-id":
            raise ValidationError(f"unsupported tie_break {self.tie_break!r}")
        return self

    def predict(self, cam: CamTensor, image: np.ndarray) -> np.ndarray:
        """H×W uint8 label map (0 = background)."""
        self.fit()
        return generate_ppmg(
            cam, image, alpha=self.alpha, fg_threshold=self.fg_threshold,
            cvs_threshold=self.cvs_threshold, cvs_scale=self.cvs_scale,
            cvs_exponent_floor=self.cvs_exponent_floor, crf=self.crf,
        )

    def binary_masks(self, cam: CamTensor, image: np.ndarray) -> np.ndarray:
        """The per-class membership masks (C, H, W) the pipeline uses."""
        img = check_rgb_image(image)
        _check_pairing(cam, img)
        crf = self.crf if self.crf is not None else DenseCrf()
        smoothed = cvs_smooth(normalize(cam.data), self.cvs_threshold,
                              self.cvs_scale, self.cvs_exponent_floor)
        return np.stack([
            class_binary_mask(smoothed[c], img, alpha=self.alpha,
                              fg_threshold=self.fg_threshold, crf=crf)
            for c in range(cam.channels)
        ])
