"""Accuracy, weighted F1 and the metric registry."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, ValidationError


@dataclass
class EvalReport:
    metric: str
    score: float
    n: int
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)
    f1: list[float] = field(default_factory=list)
    support: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> EvalReport:
        return cls(**data)


def accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise DimensionError(f"shape mismatch {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValidationError("accuracy of an empty set")
    return float(np.mean(preds == labels))


def one_hot(indices, num_classes: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((len(indices), num_classes), dtype=np.int64)
    out[np.arange(len(indices)), indices] = 1
    return out


def per_label_scores(preds: np.ndarray, labels: np.ndarray):
    """Per-column precision, recall, F1 and support of binary matrices.

    Zero denominators give 0.
    """
    p = preds.astype(bool)
    y = labels.astype(bool)
    tp = (p & y).sum(axis=0).astype(np.float64)
    fp = (p & ~y).sum(axis=0).astype(np.float64)
    fn = (~p & y).sum(axis=0).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        recall = np.where(tp + fn > 0, tp / (tp + fn), 0.0)
        f1 = np.where(2 * tp + fp + fn > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    return precision, recall, f1, (tp + fn).astype(np.int64)


def weighted_f1(preds, labels, num_classes: int | None = None) -> EvalReport:
    """Support-weighted F1. 1-D class indices are one-hot encoded first;
    2-D inputs are taken as already-thresholded multilabel matrices."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise DimensionError(f"shape mismatch {preds.shape} vs {labels.shape}")
    if preds.ndim == 1:
        k = num_classes or int(max(preds.max(initial=0), labels.max(initial=0))) + 1
        preds, labels = one_hot(preds, k), one_hot(labels, k)
    precision, recall, f1, support = per_label_scores(preds, labels)
    total = support.sum()
    score = float((f1 * support).sum() / total) if total else 0.0
    return EvalReport("weighted_f1", score, len(preds), precision.tolist(), recall.tolist(),
                      f1.tolist(), support.tolist())


def accuracy_report(preds, labels, num_classes: int | None = None) -> EvalReport:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.ndim == 2:
        score = float(np.mean(np.all(preds == labels, axis=1)))
        breakdown = weighted_f1(preds, labels)
    else:
        score = accuracy(preds, labels)
        breakdown = weighted_f1(preds, labels, num_classes)
    return EvalReport("accuracy", score, len(preds), breakdown.precision, breakdown.recall,
                      breakdown.f1, breakdown.support)


MetricFn = Callable[..., EvalReport]

METRICS: dict[str, MetricFn] = {
    "accuracy": accuracy_report,
    "weighted_f1": weighted_f1,
}

TASK_DEFAULTS = {"multiclass": "accuracy", "multilabel": "weighted_f1"}


def register_metric(name: str, fn: MetricFn):
    METRICS[name] = fn


def metric_for_task(task: str, override: str | None = None) -> tuple[str, MetricFn]:
    if task not in TASK_DEFAULTS:
        raise ValidationError(f"unknown task {task!r}")
    name = override or TASK_DEFAULTS[task]
    try:
        return name, METRICS[name]
    except KeyError:
        raise ValidationError(f"unknown metric {name!r}; registered: {sorted(METRICS)}") from None
