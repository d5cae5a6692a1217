"""Exception hierarchy.

Everything raised on purpose derives from LoomspectError so the CLI can
separate expected failures (bad data, bad parameters -> exit code 2) from
genuine bugs (anything else -> exit code 3).
"""


class LoomspectError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(LoomspectError):
    """A parameter value is outside its documented domain."""


class ImageIOError(LoomspectError):
    """An image file could not be read or written, or has an unsupported format."""


class DimensionError(LoomspectError):
    """Array shapes are incompatible (kernel larger than image, mask size mismatch, ...)."""


class DegenerateInputError(LoomspectError):
    """Input carries no usable signal (constant image, zero vector, single-level map)."""


class PeriodEstimationError(LoomspectError):
    """The pattern period could not be recovered from the autocorrelation."""


class TrainingError(LoomspectError):
    """Model training cannot proceed (no patches survive filtering, image too small)."""


class ModelFormatError(LoomspectError):
    """A model file is missing required fields or has an unsupported version."""
