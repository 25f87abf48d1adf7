import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixmas.errors import DimensionError, ValidationError
from mixmas.metrics import (METRICS, accuracy, accuracy_report, metric_for_task, per_label_scores,
                            register_metric, weighted_f1)

from oracles import as_rows, brute_accuracy, brute_weighted_f1


def test_accuracy_examples():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert accuracy([0, 1, 2, 3], [0, 1, 2, 0]) == 0.75
    assert accuracy([1, 1], [0, 0]) == 0.0


def test_accuracy_errors():
    with pytest.raises(ValidationError):
        accuracy([], [])
    with pytest.raises(DimensionError):
        accuracy([1], [1, 2])


def test_weighted_f1_hand_case():
    report = weighted_f1([0, 1, 1, 1, 0], [0, 0, 1, 1, 1])
    assert report.score == 0.6
    assert report.f1[0] == 0.5
    assert report.f1[1] == pytest.approx(2 / 3, abs=1e-15)
    assert report.support == [2, 3]


def test_weighted_f1_perfect():
    y = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 0]])
    assert weighted_f1(y, y).score == 1.0


def test_weighted_f1_shape_mismatch():
    with pytest.raises(DimensionError):
        weighted_f1(np.zeros((2, 3)), np.zeros((2, 4)))


def test_zero_support_label_has_no_weight():
    y = np.array([[1, 0], [1, 0]])
    p = np.array([[1, 1], [1, 0]])
    report = weighted_f1(p, y)
    assert report.support == [2, 0]
    assert report.f1[1] == 0.0
    assert report.score == 1.0


def test_all_empty_labels_give_zero_not_nan():
    assert weighted_f1(np.zeros((3, 2)), np.zeros((3, 2))).score == 0.0


def test_weighted_equals_support_average():
    rng = np.random.default_rng(0)
    p, y = rng.integers(0, 2, (40, 5)), rng.integers(0, 2, (40, 5))
    report = weighted_f1(p, y)
    ref = sum(f * s for f, s in zip(report.f1, report.support)) / sum(report.support)
    assert abs(report.score - ref) < 1e-12


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n, k = int(rng.integers(1, 30)), int(rng.integers(2, 6))
        if rng.random() < 0.5:
            p, y = rng.integers(0, k, n), rng.integers(0, k, n)
            assert abs(weighted_f1(p, y, k).score - brute_weighted_f1(as_rows(p, k), as_rows(y, k))) < 1e-12
            assert abs(accuracy(p, y) - brute_accuracy(p.tolist(), y.tolist())) < 1e-12
        else:
            p, y = rng.integers(0, 2, (n, k)), rng.integers(0, 2, (n, k))
            assert abs(weighted_f1(p, y).score - brute_weighted_f1(p.tolist(), y.tolist())) < 1e-12


@settings(max_examples=100, deadline=None)
@given(arrays(np.int64, (12, 3), elements=st.integers(0, 1)),
       arrays(np.int64, (12, 3), elements=st.integers(0, 1)),
       st.permutations(list(range(12))))
def test_bounds_and_row_permutation_invariance(p, y, perm):
    s = weighted_f1(p, y).score
    assert 0.0 <= s <= 1.0
    assert weighted_f1(p[perm], y[perm]).score == pytest.approx(s, abs=1e-15)
    prec, rec, f1, _ = per_label_scores(p, y)
    assert np.all((0 <= f1) & (f1 <= 1) & (0 <= prec) & (prec <= 1) & (0 <= rec) & (rec <= 1))


def test_accuracy_report_carries_breakdown():
    report = accuracy_report([0, 1, 1], [0, 1, 0], num_classes=3)
    assert report.metric == "accuracy"
    assert report.score == pytest.approx(2 / 3)
    assert len(report.f1) == 3 and report.support == [2, 1, 0]


def test_task_defaults():
    assert metric_for_task("multiclass")[0] == "accuracy"
    assert metric_for_task("multilabel")[0] == "weighted_f1"
    assert metric_for_task("multilabel")[1] is weighted_f1


def test_registry_override():
    def precision_macro(preds, labels, num_classes=None):
        report = weighted_f1(preds, labels, num_classes)
        report.metric, report.score = "precision_macro", float(np.mean(report.precision))
        return report

    register_metric("precision_macro", precision_macro)
    try:
        name, fn = metric_for_task("multiclass", "precision_macro")
        assert name == "precision_macro" and fn is precision_macro
    finally:
        del METRICS["precision_macro"]
    with pytest.raises(ValidationError):
        metric_for_task("multiclass", "precision_macro")


def test_unknown_task():
    with pytest.raises(ValidationError):
        metric_for_task("regression")
