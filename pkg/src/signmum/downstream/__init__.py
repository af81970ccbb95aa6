from .classifier import ClassifierModel, FinetuneConfig, classify, finetune, score_dataset
from .fusion import fuse_score_files, late_fuse, load_scores, stable_softmax, write_scores
from .metrics import MetricsReport, compute_metrics, evaluate, rank_classes

__all__ = [
    "ClassifierModel",
    "FinetuneConfig",
    "classify",
    "finetune",
    "score_dataset",
    "fuse_score_files",
    "late_fuse",
    "load_scores",
    "stable_softmax",
    "write_scores",
    "MetricsReport",
    "compute_metrics",
    "evaluate",
    "rank_classes",
]
