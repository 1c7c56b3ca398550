import numpy as np
import pytest
from sklearn.metrics import (
    accuracy_score,
    f1_score as sk_f1,
    precision_score,
    recall_score,
    roc_auc_score,
)

from crowdlens import ForestConfig, cross_validate, undersample_indices
from crowdlens.errors import SingleClass
from crowdlens.evaluate import (
    METRIC_NAMES,
    accuracy,
    auc_score,
    f1_score,
    fold_slices,
    precision,
    recall,
)


def test_undersample_basic():
    y = np.array([0] * 80 + [1] * 20)
    idx = undersample_indices(y, np.random.default_rng(0))
    assert np.sum(y[idx] == 0) == 20
    assert np.sum(y[idx] == 1) == 20
    assert len(np.unique(idx)) == len(idx)  # without replacement


def test_undersample_balanced_identity():
    y = np.array([0, 1] * 25)
    idx = undersample_indices(y, np.random.default_rng(0))
    assert np.array_equal(idx, np.arange(50))


def test_undersample_single_class():
    with pytest.raises(SingleClass):
        undersample_indices(np.zeros(100), np.random.default_rng(0))


def test_metrics_against_sklearn():
    rng = np.random.default_rng(8)
    y = rng.integers(0, 2, 400)
    pred = rng.integers(0, 2, 400)
    scores = rng.random(400)
    assert accuracy(y, pred) == pytest.approx(accuracy_score(y, pred))
    assert precision(y, pred) == pytest.approx(precision_score(y, pred))
    assert recall(y, pred) == pytest.approx(recall_score(y, pred))
    assert f1_score(y, pred) == pytest.approx(sk_f1(y, pred))
    assert auc_score(y, scores) == pytest.approx(roc_auc_score(y, scores))
    # midrank tie handling agrees with sklearn as well
    tied = np.round(scores, 1)
    assert auc_score(y, tied) == pytest.approx(roc_auc_score(y, tied))


def test_metric_edge_conventions():
    assert precision([0, 0], [0, 0]) == 0.0
    assert recall([0, 0], [1, 1]) == 0.0
    assert f1_score([0, 0], [0, 0]) == 0.0
    assert auc_score([1, 1], [0.5, 0.7]) == 0.5


def test_fold_partition_covers_rows_exactly_once():
    idx = np.arange(10)
    folds = fold_slices(idx, 5)
    assert [len(f) for f in folds] == [2, 2, 2, 2, 2]
    assert sorted(np.concatenate(folds)) == list(range(10))


def test_cross_validate_separable():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, (300, 3))
    y = (x[:, 0] > 0.5).astype(int)
    cfg = ForestConfig(n_trees=15, undersample_iterations=2, folds=5, seed=0)
    rep = cross_validate(x, y, cfg)
    assert rep.mean["accuracy"] > 0.9
    for m in METRIC_NAMES:
        assert 0.0 <= rep.mean[m] <= 1.0
    assert rep.n_evaluations == 10


def test_cross_validate_deterministic():
    rng = np.random.default_rng(2)
    x = rng.normal(0, 1, (120, 4))
    y = (x[:, 0] + rng.normal(0, 1, 120) > 0).astype(int)
    cfg = ForestConfig(n_trees=5, undersample_iterations=3, folds=4, seed=7)
    a = cross_validate(x, y, cfg)
    b = cross_validate(x, y, cfg)
    assert a.mean == b.mean
    assert a.std == b.std


def test_f1_is_harmonic_mean_per_fold():
    # metrics lists are per fold; the reported f1 averages per-fold harmonic
    # means rather than combining the averaged precision/recall
    p, r = 0.5, 1.0
    assert f1_score([1, 1, 0, 0], [1, 1, 1, 1]) == pytest.approx(2 * p * r / (p + r))


def test_report_row_format():
    from crowdlens.evaluate import EvalReport
    rep = EvalReport(mean={"accuracy": 0.989, "precision": 0.988, "recall": 0.99,
                           "f1": 0.989, "auc": 0.989},
                     std={m: 0.0 for m in METRIC_NAMES}, n_evaluations=1)
    assert rep.row() == "0.989 0.988 0.990 0.989 0.989"
