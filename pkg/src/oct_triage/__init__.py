"""Desk-scale OCT B-scan triage pipeline.

Generates synthetic phantom cohorts, trains small binary CNN classifiers,
scores B-scans, gates by gradability, aggregates to volume level, fuses the
per-task scores into a classification, and evaluates with ROC/AUROC across
simulated acquisition sites.
"""

from .domain import (
    BScan,
    ClassDecision,
    GroundTruthLabel,
    LABEL_TASKS,
    MODEL_TASKS,
    OCTVolume,
    Pathology,
    ScoreVector,
    TaskId,
    Thresholds,
    is_positive_for_task,
)
from .evaluation import EvaluationReport, evaluate_dataset, render_report
from .manifest import (
    DatasetManifest,
    Granularity,
    ManifestEntry,
    load_volume,
    parse_manifest,
    write_manifest,
)
from .metrics import ROCCurve, auroc, confusion_at_threshold, roc_curve
from .phantom import PhantomConfig, SiteProfile, generate_phantom_dataset
from .pipeline import (
    AggregationKind,
    AggregationPolicy,
    ModelBank,
    VolumePrediction,
    classify,
    dataset_quality_rating,
    grade_quality,
    load_model_bank,
    pool_general_amd,
    score_volume,
)
from .preprocess import (
    AugmentParams,
    ConcreteAugmentation,
    apply_augmentation,
    normalize,
    sample_augmentation,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationKind",
    "AggregationPolicy",
    "AugmentParams",
    "BScan",
    "ClassDecision",
    "ConcreteAugmentation",
    "DatasetManifest",
    "EvaluationReport",
    "Granularity",
    "GroundTruthLabel",
    "LABEL_TASKS",
    "MODEL_TASKS",
    "ManifestEntry",
    "ModelBank",
    "OCTVolume",
    "Pathology",
    "PhantomConfig",
    "ROCCurve",
    "ScoreVector",
    "SiteProfile",
    "TaskId",
    "Thresholds",
    "VolumePrediction",
    "apply_augmentation",
    "auroc",
    "classify",
    "confusion_at_threshold",
    "dataset_quality_rating",
    "evaluate_dataset",
    "generate_phantom_dataset",
    "grade_quality",
    "is_positive_for_task",
    "load_model_bank",
    "load_volume",
    "normalize",
    "parse_manifest",
    "pool_general_amd",
    "render_report",
    "roc_curve",
    "sample_augmentation",
    "score_volume",
    "write_manifest",
    "__version__",
]
