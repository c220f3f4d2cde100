"""Tests for confusion counts, threshold metrics, and ROC construction."""

from __future__ import annotations

import math

import numpy as np
import pytest

from dermfuse import (
    BENIGN,
    MALIGNANT,
    ConfusionCounts,
    MetricSet,
    RocCurve,
    ValidationError,
    confusion_counts,
    metric_set,
    roc_auc,
    roc_curve,
)

from conftest import REFERENCE_MODEL_METRICS


def pairwise_auc(scores, actual, positive=MALIGNANT):
    """Independent AUC oracle: mean over positive/negative pairs of the
    indicator that the positive scores higher, counting ties as 1/2."""
    pos = [s for s, a in zip(scores, actual) if a == positive]
    neg = [s for s, a in zip(scores, actual) if a != positive]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def random_labelled_scores(rng, n, tie_prone=False):
    labels = [MALIGNANT if rng.random() < 0.5 else BENIGN for _ in range(n)]
    # Force both classes to be present.
    labels[0] = MALIGNANT
    labels[-1] = BENIGN
    if tie_prone:
        scores = [float(rng.integers(0, 5)) / 4.0 for _ in range(n)]
    else:
        scores = [float(rng.random()) for _ in range(n)]
    return scores, labels


class TestConfusionCounts:
    def test_hand_counted_example(self):
        predicted = [MALIGNANT, MALIGNANT, BENIGN, BENIGN]
        actual = [MALIGNANT, BENIGN, BENIGN, MALIGNANT]
        counts = confusion_counts(predicted, actual)
        assert counts == ConfusionCounts(tp=1, fp=1, tn=1, fn=1)

    def test_perfect_prediction(self):
        labels = [MALIGNANT] * 3 + [BENIGN] * 2
        counts = confusion_counts(labels, labels)
        assert counts == ConfusionCounts(tp=3, fp=0, tn=2, fn=0)

    def test_counts_partition_the_sample(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n = int(rng.integers(1, 40))
            predicted = [MALIGNANT if rng.random() < 0.5 else BENIGN for _ in range(n)]
            actual = [MALIGNANT if rng.random() < 0.5 else BENIGN for _ in range(n)]
            counts = confusion_counts(predicted, actual)
            assert counts.tp + counts.fp + counts.tn + counts.fn == n

    def test_positive_class_swap_transposes_counts(self):
        predicted = [MALIGNANT, MALIGNANT, BENIGN, BENIGN, MALIGNANT]
        actual = [MALIGNANT, BENIGN, BENIGN, MALIGNANT, MALIGNANT]
        as_mal = confusion_counts(predicted, actual, positive=MALIGNANT)
        as_ben = confusion_counts(predicted, actual, positive=BENIGN)
        assert as_ben.tp == as_mal.tn
        assert as_ben.tn == as_mal.tp
        assert as_ben.fp == as_mal.fn
        assert as_ben.fn == as_mal.fp

    def test_accuracy_invariant_under_swap_precision_not(self):
        predicted = [MALIGNANT, MALIGNANT, BENIGN, BENIGN, MALIGNANT]
        actual = [MALIGNANT, BENIGN, BENIGN, MALIGNANT, MALIGNANT]
        m_mal = metric_set(confusion_counts(predicted, actual, positive=MALIGNANT), 0.0)
        m_ben = metric_set(confusion_counts(predicted, actual, positive=BENIGN), 0.0)
        assert m_mal.acc == m_ben.acc
        assert m_mal.pre != m_ben.pre

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            confusion_counts([MALIGNANT], [MALIGNANT, BENIGN])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            confusion_counts([], [])

    def test_unknown_label_rejected(self):
        with pytest.raises(ValidationError):
            confusion_counts(["positive"], [MALIGNANT])

    def test_negative_count_rejected(self):
        with pytest.raises(ValidationError):
            ConfusionCounts(tp=-1, fp=0, tn=2, fn=0)

    def test_zero_total_rejected(self):
        with pytest.raises(ValidationError):
            ConfusionCounts(tp=0, fp=0, tn=0, fn=0)


class TestMetricSet:
    def test_closed_forms_on_hand_example(self):
        # tp=2 fp=1 tn=6 fn=1: acc = 8/10, pre = 2/3, rec = 2/3,
        # f1 = 2*(2/3)*(2/3)/(4/3) = 2/3.
        m = metric_set(ConfusionCounts(tp=2, fp=1, tn=6, fn=1), 0.0)
        assert m.acc == 0.8
        np.testing.assert_allclose(m.pre, 2.0 / 3.0, rtol=0, atol=1e-15)
        np.testing.assert_allclose(m.rec, 2.0 / 3.0, rtol=0, atol=1e-15)
        np.testing.assert_allclose(m.f1, 2.0 / 3.0, rtol=0, atol=1e-15)
        assert m.auc == 0.0

    def test_f1_matches_reference_rows(self):
        # The stored f1 of each reference row must be the harmonic mean of
        # its own precision and recall to within the rounding of the row.
        for name, (acc, pre, rec, f1, auc) in REFERENCE_MODEL_METRICS.items():
            harmonic = 2.0 * pre * rec / (pre + rec)
            np.testing.assert_allclose(harmonic, f1, rtol=0, atol=1e-4)

    def test_zero_denominators_yield_zero(self):
        # No predicted positives and no actual positives.
        m = metric_set(ConfusionCounts(tp=0, fp=0, tn=4, fn=0), 0.0)
        assert m.acc == 1.0
        assert m.pre == 0.0
        assert m.rec == 0.0
        assert m.f1 == 0.0

    def test_f1_is_harmonic_mean_property(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            tp, fp, tn, fn = (int(rng.integers(0, 30)) for _ in range(4))
            if tp + fp + tn + fn == 0:
                continue
            m = metric_set(ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn), 0.5)
            if m.pre + m.rec > 0:
                np.testing.assert_allclose(
                    m.f1, 2 * m.pre * m.rec / (m.pre + m.rec), rtol=0, atol=1e-12
                )
            else:
                assert m.f1 == 0.0
            assert 0.0 <= m.acc <= 1.0

    def test_value_lookup(self):
        m = MetricSet(acc=0.1, pre=0.2, rec=0.3, f1=0.4, auc=0.5)
        assert m.value("acc") == 0.1
        assert m.value("auc") == 0.5
        with pytest.raises(ValidationError):
            m.value("accuracy")

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            MetricSet(acc=1.2, pre=0.0, rec=0.0, f1=0.0, auc=0.0)
        with pytest.raises(ValidationError):
            MetricSet(acc=0.5, pre=-0.1, rec=0.0, f1=0.0, auc=0.0)


class TestRocCurve:
    def test_perfect_separation_curve(self):
        curve = roc_curve([0.9, 0.1], [MALIGNANT, BENIGN])
        assert curve.points == (
            (math.inf, 0.0, 0.0),
            (0.9, 0.0, 1.0),
            (0.1, 1.0, 1.0),
        )
        assert roc_auc([0.9, 0.1], [MALIGNANT, BENIGN]) == 1.0

    def test_all_equal_scores_two_points(self):
        curve = roc_curve([0.5, 0.5, 0.5], [MALIGNANT, BENIGN, MALIGNANT])
        assert curve.points == ((math.inf, 0.0, 0.0), (0.5, 1.0, 1.0))
        assert roc_auc([0.5, 0.5, 0.5], [MALIGNANT, BENIGN, MALIGNANT]) == 0.5

    def test_staircase_auc(self):
        # Scores 0.1, 0.4 benign and 0.35, 0.8 malignant: of the four
        # positive/negative pairs exactly three are ordered correctly.
        scores = [0.1, 0.4, 0.35, 0.8]
        actual = [BENIGN, BENIGN, MALIGNANT, MALIGNANT]
        assert roc_auc(scores, actual) == 0.75
        assert pairwise_auc(scores, actual) == 0.75

    def test_tied_scores_split_pairs(self):
        scores = [0.5, 0.5]
        actual = [MALIGNANT, BENIGN]
        assert roc_auc(scores, actual) == 0.5

    def test_reversed_separation(self):
        assert roc_auc([0.1, 0.9], [MALIGNANT, BENIGN]) == 0.0

    def test_one_point_per_distinct_score(self):
        scores = [0.9, 0.9, 0.7, 0.3, 0.3, 0.3]
        actual = [MALIGNANT, BENIGN, MALIGNANT, BENIGN, BENIGN, MALIGNANT]
        curve = roc_curve(scores, actual)
        # Anchor plus one point per distinct threshold.
        assert len(curve.points) == 4
        assert curve.thresholds == (math.inf, 0.9, 0.7, 0.3)
        assert curve.points[-1][1] == 1.0
        assert curve.points[-1][2] == 1.0

    def test_trapezoid_matches_pairwise_oracle(self):
        rng = np.random.default_rng(42)
        for case in range(60):
            n = int(rng.integers(2, 60))
            scores, labels = random_labelled_scores(rng, n, tie_prone=case % 2 == 0)
            np.testing.assert_allclose(
                roc_auc(scores, labels),
                pairwise_auc(scores, labels),
                rtol=0,
                atol=1e-12,
            )

    def test_curve_monotonicity_property(self):
        rng = np.random.default_rng(42)
        for case in range(40):
            n = int(rng.integers(2, 50))
            scores, labels = random_labelled_scores(rng, n, tie_prone=True)
            curve = roc_curve(scores, labels)
            fpr = curve.fpr
            tpr = curve.tpr
            assert fpr[0] == 0.0 and tpr[0] == 0.0
            assert fpr[-1] == 1.0 and tpr[-1] == 1.0
            assert all(a <= b for a, b in zip(fpr, fpr[1:]))
            assert all(a <= b for a, b in zip(tpr, tpr[1:]))
            thresholds = curve.thresholds
            assert all(a > b for a, b in zip(thresholds, thresholds[1:]))

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            roc_curve([0.2, 0.8], [MALIGNANT, MALIGNANT])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            roc_curve([0.2], [MALIGNANT, BENIGN])

    def test_positive_swap_complements_auc(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            scores, labels = random_labelled_scores(rng, 30, tie_prone=True)
            auc_mal = roc_auc(scores, labels, positive=MALIGNANT)
            # Swapping the positive designation while keeping scores
            # oriented toward the old positive flips ranking quality.
            auc_ben = roc_auc([-s for s in scores], labels, positive=BENIGN)
            np.testing.assert_allclose(auc_mal, auc_ben, rtol=0, atol=1e-12)

    def test_curve_self_validation(self):
        with pytest.raises(ValidationError):
            RocCurve(points=((0.9, 0.0, 0.0), (0.1, 1.0, 1.0)))
        with pytest.raises(ValidationError):
            RocCurve(points=((math.inf, 0.0, 0.0), (0.5, 1.0, 0.5)))
