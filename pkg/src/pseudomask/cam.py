"""Per-channel activation-map transforms.

The pipeline stages here run between the raw classifier activations and
the CRF: min-max normalization, exponential background synthesis, unary
assembly, and the adaptive smoothing that raises partially activated
channels.  The smoothing exponent for a channel is driven by the
coefficient of variation of its foreground values: a spread-out channel
(high c_v) gets a small exponent, which lifts mid-range activations
toward 1 and expands the activated region; a uniform channel is left
almost untouched.

All functions are pure.  Statistics use numpy reductions (pairwise
summation), so results do not depend on any parallel schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DegenerateChannelError, ValidationError
from .validation import check_cam_array, check_class_ids

__all__ = [
    "CamTensor",
    "normalize",
    "background_map",
    "assemble_unary",
    "foreground_values",
    "coefficient_of_variation",
    "channel_exponents",
    "cvs_smooth",
    "CvsSmoother",
]


@dataclass(frozen=True)
class CamTensor:
    """A C×H×W non-negative activation volume plus its image-level labels.

    ``data`` holds one channel per present foreground class, aligned with
    ``class_ids``.  Background (label 0) never has a channel; it is
    synthesized downstream.
    """

    data: np.ndarray
    class_ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        arr = check_cam_array(self.data)
        ids = check_class_ids(self.class_ids, arr.shape[0])
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "class_ids", ids)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def normalize(cam: np.ndarray) -> np.ndarray:
    """Min-max normalize each channel of a C×H×W volume into [0, 1].

    A constant channel carries no localization signal, so it maps to all
    zeros instead of dividing by zero; this keeps it from claiming
    foreground anywhere.
    """
    arr = check_cam_array(cam)
    lo = arr.min(axis=(1, 2), keepdims=True)
    hi = arr.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    out = np.zeros_like(arr)
    live = (span > 0).reshape(-1)
    out[live] = (arr[live] - lo[live]) / span[live]
    return out


def background_map(norm: np.ndarray, alpha: float) -> np.ndarray:
    """Background score per pixel: ``(1 - max_c norm)**alpha``."""
    if alpha < 0:
        raise ValidationError(f"background exponent must be >= 0, got {alpha}")
    peak = np.asarray(norm, dtype=np.float64).max(axis=0)
    return (1.0 - peak) ** alpha


def assemble_unary(norm: np.ndarray, alpha: float) -> np.ndarray:
    """Stack the synthesized background under the foreground channels.

    Returns a (C+1)×H×W volume whose channel 0 is the background map and
    channels 1..C are the normalized foreground channels in input order.
    """
    arr = np.asarray(norm, dtype=np.float64)
    bg = background_map(arr, alpha)
    return np.concatenate([bg[None], arr], axis=0)


def foreground_values(norm_channel: np.ndarray, t: float) -> np.ndarray:
    """Values of one normalized channel strictly greater than ``t``."""
    chan = np.asarray(norm_channel, dtype=np.float64)
    return chan[chan > t]


def coefficient_of_variation(fg: np.ndarray) -> float:
    """Population standard deviation over mean of the foreground values.

    Raises :class:`DegenerateChannelError` when ``fg`` is empty; callers
    treat that channel as c_v = 0 (no smoothing).  Population variance
    (denominator N) keeps single-pixel sets well defined (c_v = 0).
    """
    vals = np.asarray(fg, dtype=np.float64).ravel()
    if vals.size == 0:
        raise DegenerateChannelError("no foreground values above threshold")
    if vals.max() == vals.min():
        return 0.0
    mu = vals.mean()
    sigma = np.sqrt(np.mean((vals - mu) ** 2))
    return float(sigma / mu)


def channel_exponents(
    norm: np.ndarray,
    threshold: float = 0.05,
    scale: float = 0.3,
    exponent_floor: float = 0.05,
) -> np.ndarray:
    """Smoothing exponent ``max(floor, 1 - scale * c_v)`` per channel."""
    if not 0.0 <= threshold < 1.0:
        raise ValidationError(f"foreground threshold must be in [0, 1), got {threshold}")
    if scale < 0:
        raise ValidationError(f"scale factor must be >= 0, got {scale}")
    if not 0.0 < exponent_floor <= 1.0:
        raise ValidationError(f"exponent floor must be in (0, 1], got {exponent_floor}")
    arr = np.asarray(norm, dtype=np.float64)
    exps = np.ones(arr.shape[0])
    for c in range(arr.shape[0]):
        try:
            cv = coefficient_of_variation(foreground_values(arr[c], threshold))
        except DegenerateChannelError:
            cv = 0.0
        exps[c] = max(exponent_floor, 1.0 - scale * cv)
    return exps


def cvs_smooth(
    norm: np.ndarray,
    threshold: float = 0.05,
    scale: float = 0.3,
    exponent_floor: float = 0.05,
) -> np.ndarray:
    """Raise each channel to its variation-driven exponent.

    The exponent never exceeds 1 and never drops below ``exponent_floor``
    (an exponent <= 0 would invert the pixel ordering), so the map is a
    strictly increasing, pointwise non-decreasing transform of values in
    [0, 1] with fixed points at 0 and 1.
    """
    arr = np.asarray(norm, dtype=np.float64)
    exps = channel_exponents(arr, threshold, scale, exponent_floor)
    return arr ** exps[:, None, None]


class CvsSmoother(TransformerMixin, BaseEstimator):
    """Adaptive activation smoothing as a stateless transformer.

    Parameters
    ----------
    threshold : float, default=0.05
        Foreground membership cut; only values strictly above it enter
        the per-channel statistics.
    scale : float, default=0.3
        Multiplier on the coefficient of variation when forming the
        exponent ``1 - scale * c_v``.
    exponent_floor : float, default=0.05
        Lower clamp for the exponent.
    """

    def __init__(self, threshold: float = 0.05, scale: float = 0.3,
                 exponent_floor: float = 0.05):
        self.threshold = threshold
        self.scale = scale
        self.exponent_floor = exponent_floor

    def fit(self, X=None, y=None):
        channel_exponents(
            np.zeros((1, 1, 1)), self.threshold, self.scale, self.exponent_floor
        )  # parameter sanity only; the transform is stateless
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Smooth a normalized C×H×W volume."""
        return cvs_smooth(X, self.threshold, self.scale, self.exponent_floor)

    def exponents(self, X: np.ndarray) -> np.ndarray:
        """Per-channel exponents the transform would apply to ``X``."""
        return channel_exponents(X, self.threshold, self.scale, self.exponent_floor)
