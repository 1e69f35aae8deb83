"""Segmentation and classification evaluation: Dice, ROC AUC, confusion report."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import GeometryError, PayloadTypeError, UndefinedMetricError
from .volume import PayloadKind, Volume


def dice(a: Volume, b: Volume) -> float:
    """Dice similarity coefficient 2|A&B| / (|A|+|B|) between two masks.

    Symmetric, in [0, 1].  Raises UndefinedMetricError when both masks are
    empty: an empty ground truth signals a data fault, not perfect agreement.
    """
    for m in (a, b):
        if m.kind is not PayloadKind.MASK:
            raise PayloadTypeError(f"dice requires mask payloads, got {m.kind.name}")
    if a.dims != b.dims:
        raise GeometryError(f"dice requires identical dims, got {a.dims} vs {b.dims}")
    size_a = int(np.count_nonzero(a.data))
    size_b = int(np.count_nonzero(b.data))
    if size_a + size_b == 0:
        raise UndefinedMetricError("dice undefined: both masks are empty")
    overlap = int(np.count_nonzero(a.data & b.data))
    return 2.0 * overlap / (size_a + size_b)


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under the ROC curve via the Mann-Whitney pair statistic.

    Equals the fraction of (positive, negative) pairs where the positive
    outscores the negative, ties counted 1/2.  Computed from average ranks,
    which is algebraically the same count.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise UndefinedMetricError("scores and labels must be equal-length 1D sequences")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("roc_auc undefined: need at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts with respect to a designated positive class."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        counts = (self.tp, self.fp, self.fn, self.tn)
        if any(int(c) != c or c < 0 for c in counts):
            raise UndefinedMetricError(f"confusion counts must be non-negative integers: {counts}")
        if sum(counts) < 1:
            raise UndefinedMetricError("confusion counts must total at least 1")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionCounts":
        """Counts as seen from the other class (binary complement)."""
        return ConfusionCounts(tp=self.tn, fp=self.fn, fn=self.fp, tn=self.tp)


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    precision: Mapping[str, float]
    sensitivity: Mapping[str, float]
    f1: Mapping[str, float]
    macro_f1: float
    auc: float | None = None


def _precision(c: ConfusionCounts, label: str) -> float:
    if c.tp + c.fp == 0:
        raise UndefinedMetricError(f"precision undefined for {label}: tp + fp = 0")
    return c.tp / (c.tp + c.fp)


def _sensitivity(c: ConfusionCounts, label: str) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetricError(f"sensitivity undefined for {label}: tp + fn = 0")
    return c.tp / (c.tp + c.fn)


def classification_report(
    counts: ConfusionCounts,
    positive_label: str,
    negative_label: str,
    auc: float | None = None,
) -> ClassificationReport:
    """Accuracy, per-class precision/sensitivity/F1, and macro-F1.

    F1 averaging is macro (unweighted mean of the two class F1s).  Any zero
    denominator raises UndefinedMetricError naming the offending field.
    """
    per_class = {positive_label: counts, negative_label: counts.swapped()}
    precision, sensitivity, f1 = {}, {}, {}
    for label, c in per_class.items():
        p = _precision(c, label)
        s = _sensitivity(c, label)
        if p + s == 0:
            raise UndefinedMetricError(f"f1 undefined for {label}: precision + sensitivity = 0")
        precision[label] = p
        sensitivity[label] = s
        f1[label] = 2.0 * p * s / (p + s)
    return ClassificationReport(
        accuracy=(counts.tp + counts.tn) / counts.total,
        precision=precision,
        sensitivity=sensitivity,
        f1=f1,
        macro_f1=sum(f1.values()) / len(f1),
        auc=auc,
    )
