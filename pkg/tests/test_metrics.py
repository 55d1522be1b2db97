import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtsfusion.metrics import (
    EvalResult,
    MetricError,
    aggregate,
    confusion_metrics,
    mean_std,
    results_table,
    roc_auc,
    roc_auc_pairwise,
    write_table_csv,
)


def test_perfect_classifier_all_100():
    r = confusion_metrics([1, 1, 0, 0], [1, 1, 0, 0])
    assert r.as_percent() == {"accuracy": 100.0, "specificity": 100.0, "sensitivity": 100.0, "roc_auc": 100.0}


def test_constant_score_balanced():
    r = confusion_metrics([1.0] * 4, [1, 0, 1, 0]).as_percent()
    assert (r["sensitivity"], r["specificity"], r["accuracy"]) == (100.0, 0.0, 50.0)


def test_hand_counted_confusion():
    r = confusion_metrics([0.9, 0.4, 0.6, 0.2], [1, 1, 0, 0])
    assert (r.tp, r.fn, r.tn, r.fp) == (1, 1, 1, 1)


def test_hand_counted_confusion_spec_fixture():
    # threshold 0.5: 0.9 -> TP, 0.4 -> FN, 0.3 -> TN, 0.2 -> TN
    r = confusion_metrics([0.9, 0.4, 0.3, 0.2], [1, 1, 0, 0])
    assert (r.tp, r.fn, r.tn, r.fp) == (1, 1, 2, 0)
    assert r.as_percent()["accuracy"] == 75.0
    assert r.as_percent()["sensitivity"] == 50.0
    assert r.as_percent()["specificity"] == 100.0


def test_threshold_is_inclusive():
    r = confusion_metrics([0.5, 0.1], [1, 0])
    assert r.tp == 1


def test_auc_fixtures():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert roc_auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
    assert roc_auc([0.9, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75
    assert roc_auc_pairwise([0.9, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75


def test_auc_single_class_raises():
    with pytest.raises(MetricError):
        roc_auc([0.1, 0.2], [1, 1])
    with pytest.raises(MetricError):
        confusion_metrics([0.1, 0.2], [0, 0])


def test_auc_length_mismatch_raises():
    with pytest.raises(MetricError):
        roc_auc([0.1, 0.2, 0.3], [1, 0])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=60))
def test_auc_matches_pairwise_oracle_with_ties(pairs):
    s = np.array([p[0] for p in pairs], dtype=float) / 6.0
    y = np.array([p[1] for p in pairs])
    if y.min() == y.max():
        return
    assert abs(roc_auc(s, y) - roc_auc_pairwise(s, y)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=30), st.integers(0, 2**32 - 1))
def test_auc_invariant_under_scaling_and_flip(scores, seed):
    y = np.random.default_rng(seed).integers(0, 2, len(scores))
    if y.min() == y.max():
        return
    s = np.array(scores)
    assert roc_auc(s, y) == pytest.approx(roc_auc(4.0 * s, y), abs=1e-12)
    assert roc_auc(-s, y) == pytest.approx(1 - roc_auc(s, y), abs=1e-12)


def _res(v):
    return EvalResult(v, v, v, v, 0.5, 0, 0, 0, 0)


def test_aggregate_sample_std():
    assert mean_std([1, 2, 3]) == (2.0, 1.0)
    assert mean_std([4, 4, 4])[1] == 0.0
    agg = aggregate([_res(0.01), _res(0.02), _res(0.03)])
    assert agg["accuracy"][0] == pytest.approx(2.0)
    assert agg["accuracy"][1] == pytest.approx(1.0)


def test_aggregate_single_split():
    agg = aggregate([_res(0.7)])
    assert agg["roc_auc"] == (pytest.approx(70.0), 0.0)


def test_results_table_and_csv(tmp_path):
    table = results_table({"MLP": [_res(0.5), _res(0.7)]})
    assert table[0]["model"] == "MLP" and table[0]["roc_auc"]["mean"] == 60.0
    write_table_csv(table, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0][0] == "model" and rows[1][0] == "MLP" and len(rows) == 2
