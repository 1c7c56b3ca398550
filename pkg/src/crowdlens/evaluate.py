"""Balanced undersampling, evaluation metrics, and the cross-validation harness.

Each undersample iteration balances the classes, shuffles, splits into k
folds, trains on k-1 folds and scores on the hold-out; the five metrics are
averaged over all folds of all iterations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import SingleClass
from .forest import RandomForest


def undersample_indices(labels, rng) -> np.ndarray:
    """Indices of a class-balanced subset: minority kept whole, majority
    sampled uniformly without replacement down to the minority size.

    Returns sorted row indices.  Raises SingleClass when only one label value
    is present.
    """
    y = np.asarray(labels)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClass("undersampling requires both classes")
    if len(pos) == len(neg):
        return np.sort(np.concatenate([pos, neg]))
    minority, majority = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    sampled = rng.choice(majority, size=len(minority), replace=False)
    return np.sort(np.concatenate([minority, sampled]))


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return float(np.mean(y_true == y_pred))


def precision(y_true, y_pred) -> float:
    y_pred = np.asarray(y_pred)
    predicted_pos = np.sum(y_pred == 1)
    if predicted_pos == 0:
        return 0.0
    true_pos = np.sum((np.asarray(y_true) == 1) & (y_pred == 1))
    return float(true_pos / predicted_pos)


def recall(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    actual_pos = np.sum(y_true == 1)
    if actual_pos == 0:
        return 0.0
    true_pos = np.sum((y_true == 1) & (np.asarray(y_pred) == 1))
    return float(true_pos / actual_pos)


def f1_score(y_true, y_pred) -> float:
    p = precision(y_true, y_pred)
    r = recall(y_true, y_pred)
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def auc_score(y_true, scores) -> float:
    """Area under the ROC curve via the rank statistic, midranks on ties.

    Returns 0.5 when only one class is present in ``y_true``.
    """
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=float)
    n1 = int(np.sum(y_true == 1))
    n0 = len(y_true) - n1
    if n1 == 0 or n0 == 0:
        return 0.5
    ranks = rankdata(scores)  # average method = midranks
    rank_sum = float(np.sum(ranks[y_true == 1]))
    return (rank_sum - n1 * (n1 + 1) / 2.0) / (n1 * n0)


METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "auc")


@dataclass
class ForestConfig:
    """Settings for the cross-validated forest evaluation."""

    n_trees: int = 100
    max_depth: int | None = None
    min_samples_split: int = 2
    seed: int = 0
    undersample_iterations: int = 100
    folds: int = 5

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.undersample_iterations < 1:
            raise ValueError("undersample_iterations must be at least 1")


@dataclass
class EvalReport:
    """Mean and std of each metric over folds x undersample iterations."""

    mean: dict
    std: dict
    n_evaluations: int
    config: dict = field(default_factory=dict)

    def row(self) -> str:
        """Table-style row, e.g. ``0.989 0.988 0.990 0.989 0.989``."""
        return " ".join(f"{self.mean[m]:.3f}" for m in METRIC_NAMES)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "n_evaluations": self.n_evaluations,
            "config": self.config,
            "row": self.row(),
        }


def _forest_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def fold_slices(indices: np.ndarray, k: int):
    """Split an index array into k contiguous folds covering it exactly once."""
    return np.array_split(indices, k)


def cross_validate(X, y, cfg: ForestConfig) -> EvalReport:
    """Undersampled, k-fold cross-validated forest evaluation.

    For every iteration the majority class is re-undersampled with a fresh
    derived seed, the balanced subset is shuffled and partitioned into
    ``cfg.folds`` folds, and each fold serves once as the hold-out.
    """
    from .features import FeatureMatrix  # avoid import cycle at module load

    if isinstance(X, FeatureMatrix):
        X = X.values
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(y) < cfg.folds:
        raise ValueError(f"need at least {cfg.folds} rows for {cfg.folds}-fold CV")

    per_fold = {m: [] for m in METRIC_NAMES}
    for it in range(cfg.undersample_iterations):
        rng = np.random.default_rng([cfg.seed, it])
        balanced = undersample_indices(y, rng)
        shuffled = rng.permutation(balanced)
        folds = fold_slices(shuffled, cfg.folds)
        for f, test_idx in enumerate(folds):
            if len(test_idx) == 0:
                continue
            train_idx = np.concatenate([folds[g] for g in range(cfg.folds) if g != f])
            model = RandomForest(
                n_trees=cfg.n_trees,
                max_depth=cfg.max_depth,
                min_samples_split=cfg.min_samples_split,
                seed=_forest_seed(cfg.seed, it, f),
            ).fit(X[train_idx], y[train_idx])
            proba = model.predict_proba(X[test_idx])
            y_pred = (proba >= 0.5).astype(np.int64)
            y_test = y[test_idx]
            per_fold["accuracy"].append(accuracy(y_test, y_pred))
            per_fold["precision"].append(precision(y_test, y_pred))
            per_fold["recall"].append(recall(y_test, y_pred))
            per_fold["f1"].append(f1_score(y_test, y_pred))
            per_fold["auc"].append(auc_score(y_test, proba))

    mean = {m: float(np.mean(v)) for m, v in per_fold.items()}
    std = {m: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
           for m, v in per_fold.items()}
    return EvalReport(
        mean=mean,
        std=std,
        n_evaluations=len(per_fold["accuracy"]),
        config={
            "n_trees": cfg.n_trees,
            "max_depth": cfg.max_depth,
            "min_samples_split": cfg.min_samples_split,
            "seed": cfg.seed,
            "undersample_iterations": cfg.undersample_iterations,
            "folds": cfg.folds,
            "forest_internals": "gini, bootstrap n-with-replacement, sqrt(d) features per split",
        },
    )
