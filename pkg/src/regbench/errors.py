"""Exception types raised across the package."""


class RegBenchError(Exception):
    """Base class for all package errors."""


class DegenerateInput(RegBenchError, ValueError):
    pass


class InvalidMr(RegBenchError, ValueError):
    pass


class InvalidRotation(RegBenchError, ValueError):
    pass


class ParseError(RegBenchError, ValueError):
    pass


class UnsupportedFormat(RegBenchError, ValueError):
    pass


class DimensionMismatch(RegBenchError, ValueError):
    pass


class MissingDistances(RegBenchError, ValueError):
    pass


class NoOverlap(RegBenchError, ValueError):
    pass


class InsufficientNeighbors(RegBenchError, ValueError):
    pass


class IndexOutOfRange(RegBenchError, IndexError):
    pass


class MissingFrames(RegBenchError, ValueError):
    """An estimator needs LRFs or LRAs that the correspondences do not carry."""
