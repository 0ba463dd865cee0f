"""Exception hierarchy shared by all detbench modules."""


class DetbenchError(Exception):
    """Base class for all errors raised by detbench."""

    category = "internal"


class ParseError(DetbenchError):
    """Malformed input file (annotation, detection, or binary container)."""

    category = "parse"


class ValidationError(DetbenchError):
    """Input violates a documented invariant (bad score, bad threshold, ...)."""

    category = "validation"


class ReferentialIntegrityError(DetbenchError):
    """A record references an entity that does not exist (image, category)."""

    category = "integrity"


class DecodeError(DetbenchError):
    """Image file could not be decoded."""

    category = "decode"


class ShapeError(DetbenchError):
    """Operands have incompatible dimensions."""

    category = "shape"


class UndefinedMetricError(DetbenchError):
    """The metric is mathematically undefined on this input (e.g. no ground truth)."""

    category = "undefined-metric"


class ResolutionError(DetbenchError):
    """One or more referenced files are missing; message lists every path."""

    category = "resolution"


class NumericError(DetbenchError):
    """Non-finite value encountered during optimization."""

    category = "numeric"
