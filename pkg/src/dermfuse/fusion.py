"""Decision-level fusion rules for ensembles of binary classifiers.

Each member model emits a (p_benign, p_malignant) pair per image. The rules
here combine one image's pairs across members: hard majority voting, plain
averaging, the max rule, and weighted averaging with weights derived from a
tanh transform of validation metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Sequence

from .errors import ConfigError, ValidationError
from .metrics import BENIGN, CLASS_LABELS, MALIGNANT, METRIC_NAMES, MetricSet

if TYPE_CHECKING:
    from .predstore import AlignedDataset

FUSION_METHODS = ("hard", "soft", "max", "weighted")

# Weighting uses every metric except accuracy unless callers say otherwise:
# with imbalanced screening data accuracy rewards the majority class.
DEFAULT_WEIGHT_METRICS = ("pre", "rec", "f1", "auc")


@dataclass(frozen=True)
class ProbabilityVector:
    """One image's per-member class probabilities, index-aligned by member.

    Pairs must sum to 1 within 1e-6 at construction and are renormalized to
    sum to 1 exactly, so downstream arithmetic never sees the residual.
    """

    benign: tuple[float, ...]
    malignant: tuple[float, ...]

    def __post_init__(self):
        if len(self.benign) != len(self.malignant):
            raise ValidationError(
                f"benign and malignant probability tuples differ in length: "
                f"{len(self.benign)} vs {len(self.malignant)}"
            )
        if len(self.benign) == 0:
            raise ValidationError("a probability vector needs at least one ensemble member")
        benign = []
        malignant = []
        for b, m in zip(self.benign, self.malignant):
            for value in (b, m):
                if not (0.0 <= value <= 1.0):
                    raise ValidationError(f"probability {value!r} outside [0, 1]")
            total = b + m
            if abs(total - 1.0) > 1e-6:
                raise ValidationError(f"probability pair ({b!r}, {m!r}) sums to {total!r}, not 1")
            benign.append(b / total)
            malignant.append(m / total)
        object.__setattr__(self, "benign", tuple(benign))
        object.__setattr__(self, "malignant", tuple(malignant))

    def __len__(self) -> int:
        return len(self.benign)


@dataclass(frozen=True)
class WeightVector:
    """Per-member fusion weights plus the metric names they came from."""

    weights: tuple[float, ...]
    metric_selection: tuple[str, ...] = ()
    model_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.weights) == 0:
            raise ValidationError("a weight vector needs at least one member")
        for w in self.weights:
            if not math.isfinite(w) or w < 0.0:
                raise ValidationError(f"weights must be finite and non-negative, got {w!r}")
        if not any(w > 0.0 for w in self.weights):
            raise ValidationError("all weights are zero; the ensemble is degenerate")
        if self.model_ids is not None and len(self.model_ids) != len(self.weights):
            raise ValidationError(
                f"{len(self.model_ids)} model ids for {len(self.weights)} weights"
            )

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class FusedPrediction:
    """Fused class scores and the resulting label for one image."""

    image_id: str
    b_pred: float
    m_pred: float
    label: str

    def __post_init__(self):
        if self.label not in CLASS_LABELS:
            raise ValidationError(f"fused label {self.label!r} not in {CLASS_LABELS}")


def argmax_label(b_pred: float, m_pred: float) -> str:
    """Class with the larger score; exact ties resolve to malignant.

    Ties break toward malignant because a missed melanoma costs far more
    than a false alarm.
    """
    return MALIGNANT if m_pred >= b_pred else BENIGN


def hard_majority_vote(labels: Sequence[str], probabilities: ProbabilityVector | None = None) -> str:
    """Majority vote over member labels.

    A two-class tie is broken by soft-averaging the tied members'
    probabilities when they are supplied (with two classes, a tie means every
    member is tied); without probabilities the malignant tie rule applies.
    """
    if len(labels) == 0:
        raise ValidationError("cannot vote over zero member labels")
    for label in labels:
        if label not in CLASS_LABELS:
            raise ValidationError(f"vote label {label!r} not in {CLASS_LABELS}")
    if probabilities is not None and len(probabilities) != len(labels):
        raise ValidationError(
            f"{len(probabilities)} probability pairs for {len(labels)} vote labels"
        )
    malignant_votes = sum(1 for label in labels if label == MALIGNANT)
    benign_votes = len(labels) - malignant_votes
    if malignant_votes > benign_votes:
        return MALIGNANT
    if benign_votes > malignant_votes:
        return BENIGN
    if probabilities is None:
        return MALIGNANT
    fused = soft_average(probabilities)
    return fused.label


def soft_average(pv: ProbabilityVector) -> FusedPrediction:
    """Unweighted mean of member probabilities per class, then argmax."""
    n = len(pv)
    b_pred = sum(pv.benign) / n
    m_pred = sum(pv.malignant) / n
    return FusedPrediction("", b_pred, m_pred, argmax_label(b_pred, m_pred))


def max_rule(pv: ProbabilityVector) -> FusedPrediction:
    """Per-class maximum over members, then argmax.

    The two maxima generally come from different members, so the fused
    scores need not sum to 1; only their order matters for the label.
    """
    b_pred = max(pv.benign)
    m_pred = max(pv.malignant)
    return FusedPrediction("", b_pred, m_pred, argmax_label(b_pred, m_pred))


def weighted_average(pv: ProbabilityVector, weights: WeightVector) -> FusedPrediction:
    """Weighted mean of member probabilities, normalized by total weight."""
    if len(weights) != len(pv):
        raise ValidationError(f"{len(weights)} weights for {len(pv)} ensemble members")
    total = sum(weights.weights)
    b_pred = sum(w * b for w, b in zip(weights.weights, pv.benign)) / total
    m_pred = sum(w * m for w, m in zip(weights.weights, pv.malignant)) / total
    return FusedPrediction("", b_pred, m_pred, argmax_label(b_pred, m_pred))


def tanh_weights(
    metric_sets: Sequence[MetricSet],
    selection: Sequence[str] = DEFAULT_WEIGHT_METRICS,
    model_ids: Sequence[str] | None = None,
) -> WeightVector:
    """Per-member weights: sum of tanh over each member's selected metrics.

    tanh compresses the [0, 1] metric range non-linearly, so the gap between
    a strong and a mediocre member shrinks less than a plain sum would and
    no single saturated metric can dominate. All weights are positive unless
    every selected metric is exactly 0.
    """
    if len(metric_sets) == 0:
        raise ValidationError("need at least one member metric set to derive weights")
    selection = tuple(selection)
    if len(selection) == 0:
        raise ValidationError("metric selection is empty; pick at least one metric")
    seen = set()
    for name in selection:
        if name not in METRIC_NAMES:
            raise ValidationError(f"unknown metric {name!r}; expected one of {METRIC_NAMES}")
        if name in seen:
            raise ValidationError(f"metric {name!r} appears twice in the selection")
        seen.add(name)
    if model_ids is not None and len(model_ids) != len(metric_sets):
        raise ValidationError(f"{len(model_ids)} model ids for {len(metric_sets)} metric sets")
    weights = tuple(
        sum(math.tanh(ms.value(name)) for name in selection) for ms in metric_sets
    )
    return WeightVector(
        weights=weights,
        metric_selection=selection,
        model_ids=tuple(model_ids) if model_ids is not None else None,
    )


def align_weights(ds: "AlignedDataset", weights: WeightVector) -> WeightVector:
    """Reorder weights to the dataset's member order, matching by model id.

    Weight vectors without model ids are applied positionally and must have
    the dataset's member count."""
    if weights.model_ids is None:
        if len(weights) != len(ds.model_ids):
            raise ValidationError(
                f"{len(weights)} weights for {len(ds.model_ids)} ensemble members"
            )
        return weights
    if sorted(weights.model_ids) != sorted(ds.model_ids):
        raise ValidationError(
            f"weight model ids {sorted(weights.model_ids)} do not match "
            f"dataset model ids {sorted(ds.model_ids)}"
        )
    by_id = dict(zip(weights.model_ids, weights.weights))
    return WeightVector(
        weights=tuple(by_id[mid] for mid in ds.model_ids),
        metric_selection=weights.metric_selection,
        model_ids=tuple(ds.model_ids),
    )


def fuse_dataset(
    ds: "AlignedDataset",
    method: str,
    weights: WeightVector | None = None,
) -> list[FusedPrediction]:
    """Apply one fusion rule to every image of an aligned dataset.

    For the hard rule the emitted scores are the vote shares (fraction of
    members predicting each class), which keeps a rankable malignant score
    available for ROC analysis; the label comes from the vote itself.
    """
    if method not in FUSION_METHODS:
        raise ConfigError(f"unknown fusion method {method!r}; expected one of {FUSION_METHODS}")
    if method == "weighted":
        if weights is None:
            raise ConfigError("the weighted method requires a weight vector")
        weights = align_weights(ds, weights)
    elif weights is not None:
        raise ConfigError(f"the {method!r} method does not take weights")

    fused = []
    for i, image_id in enumerate(ds.image_ids):
        pv = ProbabilityVector(
            benign=tuple(float(x) for x in ds.probs[i, :, 0]),
            malignant=tuple(float(x) for x in ds.probs[i, :, 1]),
        )
        if method == "hard":
            member_labels = [argmax_label(b, m) for b, m in zip(pv.benign, pv.malignant)]
            label = hard_majority_vote(member_labels, pv)
            m_share = sum(1 for lab in member_labels if lab == MALIGNANT) / len(member_labels)
            result = FusedPrediction(image_id, 1.0 - m_share, m_share, label)
        elif method == "soft":
            result = replace(soft_average(pv), image_id=image_id)
        elif method == "max":
            result = replace(max_rule(pv), image_id=image_id)
        else:
            result = replace(weighted_average(pv, weights), image_id=image_id)
        fused.append(result)
    return fused
