"""Sequential stepwise screening for sparse multiresponse regression with group structure."""

from .criterion import EbicParams, ModelState, derive_gamma, ebic
from .engine import FitResult, SessConfig, fit, fit_raw, predict
from .grouped import BlockCoordinate, ExpandedDataset, GroupSpec, expand, prepare
from .metrics import MetricsReport, evaluate
from .simgen import SimConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "BlockCoordinate", "EbicParams", "ExpandedDataset", "FitResult", "GroupSpec",
    "MetricsReport", "ModelState", "SessConfig", "SimConfig", "derive_gamma", "ebic",
    "evaluate", "expand", "fit", "fit_raw", "predict", "prepare", "simulate",
]
