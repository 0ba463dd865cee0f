"""featx: perceptual feature extraction emitting PFEAT/PFW containers."""

from .config import ExtractorConfig, Preprocessing
from .errors import BackboneError, DecodeError, FeatxError, ValidationError
from .extractor import BatchSummary, batch_extract, compute_features, export_weights, extract
from .pfio import write_pfeat, write_pfw

__version__ = "0.1.0"

__all__ = [
    "ExtractorConfig",
    "Preprocessing",
    "FeatxError",
    "ValidationError",
    "DecodeError",
    "BackboneError",
    "BatchSummary",
    "batch_extract",
    "compute_features",
    "export_weights",
    "extract",
    "write_pfeat",
    "write_pfw",
    "__version__",
]
