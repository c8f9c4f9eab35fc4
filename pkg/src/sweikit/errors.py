"""Exception types shared across the toolkit."""


class SweiError(Exception):
    """Base class for all toolkit errors."""


class OutOfBoundsError(SweiError):
    """A window or index crosses the image border."""


class FormatError(SweiError):
    """A container file has the wrong magic, version or structure."""


class ChecksumError(SweiError):
    """A container payload is truncated or fails its CRC check."""


class GeometryMismatchError(SweiError):
    """Two fields that must share a grid do not."""


class ShapeMismatchError(SweiError):
    """Tensor shapes are inconsistent with a layer contract."""


class CFLViolationError(SweiError):
    """The requested time step is unstable for the stiffest medium."""


class FlatSignalError(SweiError):
    """A time signal has zero variance; no delay can be estimated."""


class InsufficientDataError(SweiError):
    """Too few samples in the admissible range to fit."""


class DegenerateInputError(SweiError):
    """All-zero or otherwise degenerate calibration input."""


class EmptyMaskError(SweiError):
    """A metric mask selects no pixels."""


class EmptyDatasetError(SweiError):
    """A training set contains no records."""


class TooFewPositionsError(SweiError):
    """Not enough acquisition positions to build the requested splits."""


class WindowTooLargeError(SweiError):
    """The inference window does not fit inside the image."""


class InvalidRangeError(SweiError):
    """A lo..hi display range with lo >= hi."""
