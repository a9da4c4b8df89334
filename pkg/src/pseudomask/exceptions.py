"""Exception taxonomy shared by every module.

All library errors derive from :class:`PseudomaskError` so callers can
catch the whole family with one clause.  Degenerate-input signals
(:class:`DegenerateChannelError`, :class:`EmptyLossError`) are exceptions
too, but they mark conditions the caller is expected to handle rather
than bugs.
"""


class PseudomaskError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(PseudomaskError):
    """A file on disk is not in the expected format."""


class ValidationError(PseudomaskError):
    """In-memory data violates a documented invariant."""


class IoError(PseudomaskError):
    """An underlying read/write operation failed."""


class SizeError(PseudomaskError):
    """Problem size exceeds the guard of the requested backend."""


class DegenerateChannelError(PseudomaskError):
    """A channel has no foreground pixels above the threshold."""


class EmptyLossError(PseudomaskError):
    """A loss map contains no valid pixels."""


class EmptyEvaluationError(PseudomaskError):
    """No class is present in either ground truth or prediction."""


class PredictorError(PseudomaskError):
    """An external predictor broke its output contract."""
