"""Error hierarchy for featx, mirroring the consumer library's categories."""


class FeatxError(Exception):
    """Base class; `category` names the error family for CLI reporting."""

    category = "error"


class ValidationError(FeatxError):
    category = "validation"


class DecodeError(FeatxError):
    category = "decode"


class BackboneError(FeatxError):
    """Backbone or weight source unavailable; message carries a remediation hint."""

    category = "environment"
