"""Classification metrics: per-instance and per-class top-k accuracy.

Ranking breaks score ties by ascending class index so results are
reproducible across runs and platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..pose.types import PoseDataset


def rank_classes(scores: np.ndarray) -> np.ndarray:
    """Class indices sorted by descending score, ties to the lower index."""
    row = np.asarray(scores, dtype=np.float64)
    if row.ndim != 1:
        raise ValueError(f"expected a 1-D score row, got shape {row.shape}")
    return np.argsort(-row, kind="stable")


@dataclass(frozen=True)
class MetricsReport:
    num_instances: int
    num_classes: int
    per_instance_top1: float
    per_instance_top5: float
    per_class_top1: float
    per_class_top5: float
    class_top1: tuple
    class_top5: tuple
    class_counts: tuple
    confusion: np.ndarray

    def to_dict(self) -> dict:
        return {
            "num_instances": self.num_instances,
            "num_classes": self.num_classes,
            "per_instance_top1": self.per_instance_top1,
            "per_instance_top5": self.per_instance_top5,
            "per_class_top1": self.per_class_top1,
            "per_class_top5": self.per_class_top5,
            "class_top1": [None if v is None else float(v) for v in self.class_top1],
            "class_top5": [None if v is None else float(v) for v in self.class_top5],
            "class_counts": [int(c) for c in self.class_counts],
            "confusion": self.confusion.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def format_table(self) -> str:
        lines = [
            f"{'metric':<22}{'top-1':>10}{'top-5':>10}",
            f"{'per-instance (%)':<22}{self.per_instance_top1:>10.2f}{self.per_instance_top5:>10.2f}",
            f"{'per-class (%)':<22}{self.per_class_top1:>10.2f}{self.per_class_top5:>10.2f}",
            f"instances: {self.num_instances}  classes: {self.num_classes}",
        ]
        return "\n".join(lines)


def compute_metrics(labels, scores) -> MetricsReport:
    """Accuracy metrics from integer labels (N,) and scores (N, C).

    Per-instance metrics average over samples; per-class metrics average
    per-class accuracies with equal weight, ignoring classes that have no
    instances. Top-5 degrades to top-C when there are fewer than 5 classes.
    """
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.ndim != 1 or scores.ndim != 2 or labels.shape[0] != scores.shape[0]:
        raise ValueError(
            f"incompatible shapes: labels {labels.shape}, scores {scores.shape}"
        )
    n, c = scores.shape
    if n == 0:
        raise ValueError("metrics need at least one instance")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    if not np.isfinite(scores).all():
        raise ValueError("scores must be finite")

    k = min(5, c)
    hit1 = np.zeros(n, dtype=bool)
    hit5 = np.zeros(n, dtype=bool)
    confusion = np.zeros((c, c), dtype=np.int64)
    for i in range(n):
        ranked = rank_classes(scores[i])
        hit1[i] = ranked[0] == labels[i]
        hit5[i] = labels[i] in ranked[:k]
        confusion[labels[i], ranked[0]] += 1

    counts = np.bincount(labels, minlength=c)
    class_top1 = []
    class_top5 = []
    for cls in range(c):
        if counts[cls] == 0:
            class_top1.append(None)
            class_top5.append(None)
            continue
        members = labels == cls
        class_top1.append(100.0 * hit1[members].mean())
        class_top5.append(100.0 * hit5[members].mean())
    present1 = [v for v in class_top1 if v is not None]
    present5 = [v for v in class_top5 if v is not None]

    return MetricsReport(
        num_instances=n,
        num_classes=c,
        per_instance_top1=100.0 * hit1.mean(),
        per_instance_top5=100.0 * hit5.mean(),
        per_class_top1=float(np.mean(present1)),
        per_class_top5=float(np.mean(present5)),
        class_top1=tuple(class_top1),
        class_top5=tuple(class_top5),
        class_counts=tuple(int(x) for x in counts),
        confusion=confusion,
    )


def evaluate(dataset: PoseDataset, model) -> MetricsReport:
    """Score every sequence with the classifier and compute metrics."""
    from .classifier import score_dataset

    if not dataset.labeled:
        raise ValueError("evaluation requires a labeled dataset")
    _, labels, scores = score_dataset(dataset, model)
    return compute_metrics(labels, scores)
