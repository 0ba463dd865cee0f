"""detbench: unified benchmark engine for adversarial attacks on object
detectors — detection impact metrics (mAP, AP_loc, CSR), perceptibility
metrics (L_p, PSNR, SSIM, LPIPS distance), a toy-scale PGD attack core, and
mixed-attack training-set composition."""

from .data_model import (
    BoundingBox,
    Dataset,
    Detection,
    DetectionSet,
    GroundTruthObject,
    ImageBuffer,
    ImageRecord,
)
from .det_metrics import MetricBundle, evaluate_ap_loc, evaluate_csr, evaluate_map, relative_drop
from .pixel_metrics import DistanceStats, NormBundle, lp_norms, lpips_distance, psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Dataset",
    "Detection",
    "DetectionSet",
    "GroundTruthObject",
    "ImageBuffer",
    "ImageRecord",
    "MetricBundle",
    "DistanceStats",
    "NormBundle",
    "evaluate_map",
    "evaluate_ap_loc",
    "evaluate_csr",
    "relative_drop",
    "lp_norms",
    "psnr",
    "ssim",
    "lpips_distance",
    "__version__",
]
