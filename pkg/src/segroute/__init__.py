"""Classification-routed adaptive segmentation pipeline engine.

Preprocess CT-like volumes, classify each scan's pathology, route it to a
pathology-specific segmentation model, and statistically compare the adaptive
pipeline against a generic single model and the ground-truth-routed optimum.
"""

from .errors import SegrouteError
from .metrics import ConfusionCounts, classification_report, dice, roc_auc
from .models import (
    ClassScores,
    ClassWeights,
    LinearClassifier,
    ThresholdSegmenter,
    extract_features,
    train_linear_classifier,
)
from .occlusion import OcclusionSpec, occlusion_map
from .phantom import PhantomSpec, generate_cohort, generate_phantom, load_manifest
from .pipeline import (
    OracleClassifier,
    RoutingResult,
    ScanRecord,
    SegmenterRegistry,
    categorize,
    run_adaptive,
    run_generic,
    run_optimal,
)
from .preprocess import (
    AugmentSpec,
    WindowSpec,
    augment,
    preprocess_for_classification,
    resize_box,
    window,
)
from .stats import PairedSample, PairedTestResult, compare_methods, wilcoxon_signed_rank
from .volume import PayloadKind, Volume, read_svol, reorient, write_svol

__version__ = "0.1.0"

__all__ = [
    "AugmentSpec",
    "ClassScores",
    "ClassWeights",
    "ConfusionCounts",
    "LinearClassifier",
    "OcclusionSpec",
    "OracleClassifier",
    "PairedSample",
    "PairedTestResult",
    "PayloadKind",
    "PhantomSpec",
    "RoutingResult",
    "ScanRecord",
    "SegmenterRegistry",
    "SegrouteError",
    "ThresholdSegmenter",
    "Volume",
    "WindowSpec",
    "augment",
    "categorize",
    "classification_report",
    "compare_methods",
    "dice",
    "extract_features",
    "generate_cohort",
    "generate_phantom",
    "load_manifest",
    "occlusion_map",
    "preprocess_for_classification",
    "read_svol",
    "reorient",
    "resize_box",
    "roc_auc",
    "run_adaptive",
    "run_generic",
    "run_optimal",
    "train_linear_classifier",
    "wilcoxon_signed_rank",
    "window",
    "write_svol",
]
