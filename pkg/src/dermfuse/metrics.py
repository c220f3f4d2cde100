"""Binary classification metrics for benign/malignant lesion labels.

The malignant class is the positive class everywhere in this package. All
metrics are returned as fractions in [0, 1]; rendering as percentages is a
presentation concern handled at report time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

BENIGN = "benign"
MALIGNANT = "malignant"
CLASS_LABELS = (BENIGN, MALIGNANT)

METRIC_NAMES = ("acc", "pre", "rec", "f1", "auc")


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts of a 2x2 confusion matrix with malignant as positive."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValidationError(f"confusion count {name} must be a non-negative integer, got {value!r}")
        if self.total == 0:
            raise ValidationError("confusion counts are all zero; at least one sample is required")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricSet:
    """Accuracy, precision, recall, F1, and ROC-AUC as fractions in [0, 1]."""

    acc: float
    pre: float
    rec: float
    f1: float
    auc: float

    def __post_init__(self):
        for name in METRIC_NAMES:
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValidationError(f"metric {name} must lie in [0, 1], got {value!r}")

    def value(self, name: str) -> float:
        if name not in METRIC_NAMES:
            raise ValidationError(f"unknown metric {name!r}; expected one of {METRIC_NAMES}")
        return getattr(self, name)


@dataclass(frozen=True)
class RocCurve:
    """ROC operating points ordered by descending decision threshold.

    ``points`` is a tuple of (threshold, fpr, tpr). The first point is the
    (inf, 0, 0) anchor where nothing is predicted positive; the last point is
    always (t_min, 1, 1) since at the lowest observed score everything is.
    """

    points: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValidationError("a ROC curve needs at least the two endpoint operating points")
        first, last = self.points[0], self.points[-1]
        if (first[1], first[2]) != (0.0, 0.0) or not math.isinf(first[0]):
            raise ValidationError("ROC curve must start at the (inf, 0, 0) anchor")
        if (last[1], last[2]) != (1.0, 1.0):
            raise ValidationError("ROC curve must end at (fpr, tpr) = (1, 1)")
        prev = first
        for point in self.points[1:]:
            if point[0] >= prev[0]:
                raise ValidationError("ROC thresholds must be strictly decreasing")
            if point[1] < prev[1] or point[2] < prev[2]:
                raise ValidationError("ROC fpr and tpr must be non-decreasing")
            prev = point

    @property
    def thresholds(self) -> tuple[float, ...]:
        return tuple(p[0] for p in self.points)

    @property
    def fpr(self) -> tuple[float, ...]:
        return tuple(p[1] for p in self.points)

    @property
    def tpr(self) -> tuple[float, ...]:
        return tuple(p[2] for p in self.points)


def _check_labels(labels: Sequence[str], argname: str) -> None:
    for label in labels:
        if label not in CLASS_LABELS:
            raise ValidationError(f"{argname} contains {label!r}; labels must be one of {CLASS_LABELS}")


def _check_positive(positive: str) -> None:
    if positive not in CLASS_LABELS:
        raise ValidationError(f"positive class {positive!r} not in {CLASS_LABELS}")


def confusion_counts(
    predicted: Sequence[str], actual: Sequence[str], positive: str = MALIGNANT
) -> ConfusionCounts:
    """Tally the 2x2 confusion matrix of predicted vs. actual labels."""
    if len(predicted) != len(actual):
        raise ValidationError(f"length mismatch: {len(predicted)} predictions vs {len(actual)} labels")
    if len(actual) == 0:
        raise ValidationError("cannot compute confusion counts for zero samples")
    _check_labels(predicted, "predicted")
    _check_labels(actual, "actual")
    _check_positive(positive)
    tp = fp = tn = fn = 0
    for pred, truth in zip(predicted, actual):
        if truth == positive:
            if pred == positive:
                tp += 1
            else:
                fn += 1
        else:
            if pred == positive:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def metric_set(counts: ConfusionCounts, auc: float) -> MetricSet:
    """Derive ACC/PRE/REC/F1 from confusion counts, attaching a given AUC.

    acc = (tp+tn)/(tp+tn+fp+fn), pre = tp/(tp+fp), rec = tp/(tp+fn) and
    f1 = 2*pre*rec/(pre+rec). Undefined ratios (zero denominators) are
    reported as 0.0 rather than raising: a model that never predicts the
    positive class has precision 0 by convention.
    """
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    acc = (tp + tn) / counts.total
    pre = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    rec = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (2.0 * pre * rec / (pre + rec)) if (pre + rec) > 0 else 0.0
    return MetricSet(acc=acc, pre=pre, rec=rec, f1=f1, auc=auc)


def roc_curve(scores: Sequence[float], actual: Sequence[str], positive: str = MALIGNANT) -> RocCurve:
    """Build the ROC curve of positive-class scores against labels.

    One operating point is emitted per distinct score value, taken in
    descending order; each point classifies ``score >= threshold`` as
    positive. Ties share a single point, so a degenerate scorer that gives
    every sample the same value yields exactly the two endpoints.
    """
    if len(scores) != len(actual):
        raise ValidationError(f"length mismatch: {len(scores)} scores vs {len(actual)} labels")
    if len(actual) == 0:
        raise ValidationError("cannot build a ROC curve from zero samples")
    _check_labels(actual, "actual")
    _check_positive(positive)
    score_arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(score_arr)):
        raise ValidationError("scores must be finite")
    truth = np.asarray([label == positive for label in actual], dtype=bool)
    n_pos = int(truth.sum())
    n_neg = len(actual) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("ROC curve needs at least one sample of each class")

    order = np.argsort(-score_arr, kind="stable")
    sorted_scores = score_arr[order]
    sorted_truth = truth[order]
    cum_tp = np.cumsum(sorted_truth)
    cum_fp = np.cumsum(~sorted_truth)
    # Last index of each tie group marks one operating point per distinct score.
    distinct = np.nonzero(np.append(np.diff(sorted_scores) != 0.0, True))[0]

    points = [(math.inf, 0.0, 0.0)]
    for idx in distinct:
        points.append((
            float(sorted_scores[idx]),
            float(cum_fp[idx] / n_neg),
            float(cum_tp[idx] / n_pos),
        ))
    return RocCurve(points=tuple(points))


def roc_auc(scores: Sequence[float], actual: Sequence[str], positive: str = MALIGNANT) -> float:
    """Area under the ROC curve by trapezoidal integration.

    Equivalent to the probability that a uniformly drawn positive sample
    outscores a uniformly drawn negative one, counting ties as half.
    """
    curve = roc_curve(scores, actual, positive)
    area = 0.0
    for (_, x0, y0), (_, x1, y1) in zip(curve.points, curve.points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area
