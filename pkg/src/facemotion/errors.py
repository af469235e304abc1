"""Shared exception types.

File loaders distinguish three failure classes so callers can react
differently to a corrupt container, a short read, and bad payload values.
"""


class FacemotionError(Exception):
    """Base class for all library errors."""


class FormatError(FacemotionError):
    """A file container is malformed: bad magic, version, or header fields."""


class TruncatedPayloadError(FormatError):
    """A file ended before the payload its header declared."""


class NonFiniteDataError(FacemotionError):
    """Data contains NaN or infinite values."""


class InsufficientFramesError(FacemotionError):
    """An operation needs more frames than the sequence provides."""


class InsufficientAudioError(FacemotionError):
    """An audio clip is shorter than one analysis window."""


class MaskError(FacemotionError):
    """A region mask is empty, duplicated, or out of range."""
