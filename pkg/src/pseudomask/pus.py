"""Loss-map transforms that damp suspected-noise pixels.

When a segmentation model trained on pseudo-masks starts fitting well
(image mean loss below a warm-up threshold), the remaining high-loss
pixels are likely annotation noise; pretending to under-fit them keeps
the model from memorizing that noise.  Three transforms are provided:

* ``clamp`` — cap each per-pixel loss at ``kappa``;
* ``pow``   — raise each loss to the ``kappa`` power;
* ``ignore``— zero out losses at or above ``kappa``.

The gate and all statistics run over valid pixels only (pixels whose
label is the ignore value contribute nothing).  ``pow`` with kappa < 1
increases sub-1 losses; it is applied exactly as defined regardless.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import EmptyLossError, ValidationError
from .validation import check_loss_map

__all__ = [
    "pus_clamp",
    "pus_pow",
    "pus_ignore",
    "pus_loss",
    "PretendedUnderfitLoss",
    "PUS_MODES",
]

PUS_MODES = ("clamp", "pow", "ignore", "none")


def _check_kappa(kappa: float) -> float:
    if kappa <= 0:
        raise ValidationError(f"kappa must be > 0, got {kappa}")
    return float(kappa)


def pus_clamp(values: np.ndarray, kappa: float, valid_mask=None) -> np.ndarray:
    """Elementwise min(L, kappa) over valid pixels."""
    arr, mask = check_loss_map(values, valid_mask)
    _check_kappa(kappa)
    out = arr.copy()
    out[mask] = np.minimum(arr[mask], kappa)
    return out


def pus_pow(values: np.ndarray, kappa: float, valid_mask=None) -> np.ndarray:
    """Elementwise L**kappa over valid pixels."""
    arr, mask = check_loss_map(values, valid_mask)
    _check_kappa(kappa)
    out = arr.copy()
    out[mask] = arr[mask] ** kappa
    return out


def pus_ignore(values: np.ndarray, kappa: float, valid_mask=None) -> np.ndarray:
    """Zero out valid entries at or above kappa; keep the rest."""
    arr, mask = check_loss_map(values, valid_mask)
    _check_kappa(kappa)
    out = arr.copy()
    out[mask & (arr >= kappa)] = 0.0
    return out


_TRANSFORMS = {"clamp": pus_clamp, "pow": pus_pow, "ignore": pus_ignore}


def pus_loss(values: np.ndarray, *, mode: str = "clamp", beta: float = 0.5,
             kappa: float = 0.5, valid_mask=None) -> float:
    """Image loss with the warm-up gate.

    The plain mean over valid pixels is returned when it is >= ``beta``
    (the model is still under-fitting on its own) or when ``mode`` is
    ``"none"``; below the threshold the selected transform is applied
    first.  A boundary mean exactly equal to ``beta`` takes the plain
    branch.
    """
    if mode not in PUS_MODES:
        raise ValidationError(f"mode must be one of {PUS_MODES}, got {mode!r}")
    if beta < 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    arr, mask = check_loss_map(values, valid_mask)
    if not mask.any():
        raise EmptyLossError("loss map has no valid pixels")
    plain = float(np.mean(arr[mask]))
    if mode == "none" or plain >= beta:
        return plain
    transformed = _TRANSFORMS[mode](arr, kappa, mask)
    return float(np.mean(transformed[mask]))


class PretendedUnderfitLoss(BaseEstimator):
    """Gated loss reduction as a configured estimator.

    Parameters
    ----------
    mode : {"clamp", "pow", "ignore", "none"}, default="clamp"
    beta : float, default=0.5
        Warm-up threshold on the image's mean valid loss.
    kappa : float, default=0.5
        Transform parameter; conventionally equal to ``beta``.
    """

    def __init__(self, mode: str = "clamp", beta: float = 0.5, kappa: float = 0.5):
        self.mode = mode
        self.beta = beta
        self.kappa = kappa

    def fit(self, X=None, y=None):
        if self.mode not in PUS_MODES:
            raise ValidationError(f"mode must be one of {PUS_MODES}, got {self.mode!r}")
        _check_kappa(self.kappa)
        return self

    def reduce(self, values: np.ndarray, valid_mask=None) -> float:
        """Scalar training loss for one image's loss map."""
        return pus_loss(values, mode=self.mode, beta=self.beta,
                        kappa=self.kappa, valid_mask=valid_mask)

    def transform_map(self, values: np.ndarray, valid_mask=None) -> np.ndarray:
        """The transform alone, ungated (mode "none" is the identity)."""
        if self.mode == "none":
            arr, _ = check_loss_map(values, valid_mask)
            return arr.copy()
        return _TRANSFORMS[self.mode](values, self.kappa, valid_mask)
