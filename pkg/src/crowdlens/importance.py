"""Permutation importance for individual features and feature groups.

The score of a column is the mean increase in hold-out prediction error after
randomly permuting it.  Grouped scores permute all member columns jointly
under one shared row permutation per repeat, preserving the group's internal
structure.  Negative raw scores are floored at zero before normalization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownColumn
from .evaluate import accuracy, auc_score
from .features import FeatureMatrix


@dataclass(frozen=True)
class ImportanceEntry:
    name: str
    raw: float
    share: float


@dataclass
class ImportanceReport:
    features: list
    groups: list
    baseline_error: float
    error_measure: str
    repeats: int
    seed: int

    def ranking(self) -> list:
        return sorted(self.features, key=lambda e: (-e.share, e.name))

    def group_share(self, name: str) -> float:
        for entry in self.groups:
            if entry.name == name:
                return entry.share
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "features": [{"name": e.name, "raw": e.raw, "share": e.share}
                         for e in self.ranking()],
            "groups": [{"name": e.name, "raw": e.raw, "share": e.share}
                       for e in self.groups],
            "baseline_error": self.baseline_error,
            "error_measure": self.error_measure,
            "repeats": self.repeats,
            "seed": self.seed,
        }


def _error(model, X, y, measure: str) -> float:
    if measure == "accuracy":
        return 1.0 - accuracy(y, model.predict(X))
    if measure == "auc":
        return 1.0 - auc_score(y, model.predict_proba(X))
    raise ValueError(f"unknown error measure {measure!r}")


def _normalize(raws: np.ndarray) -> np.ndarray:
    floored = np.maximum(raws, 0.0)
    total = floored.sum()
    if total <= 0:
        return np.zeros_like(floored)
    return floored / total


def permutation_importance(model, X, y, groups: dict | None = None,
                           repeats: int = 10, seed: int = 0,
                           error_measure: str = "accuracy") -> ImportanceReport:
    """Per-feature and per-group permutation importance on a hold-out set.

    Parameters
    ----------
    model : fitted classifier with predict / predict_proba
    X : FeatureMatrix or 2-D array
        Hold-out rows, disjoint from the training data.
    y : 0/1 labels aligned with X.
    groups : mapping of group name -> list of column names (or indices),
        e.g. ``{"crowd": [...], "project": [...]}``.  Optional.
    repeats : permutations per column (and per group).
    error_measure : {"accuracy", "auc"}
        ``"accuracy"`` scores 1 - accuracy of hard votes, ``"auc"`` scores
        1 - AUC of the vote shares.
    """
    if isinstance(X, FeatureMatrix):
        columns = list(X.columns)
        values = np.array(X.values, dtype=float)
    else:
        values = np.array(np.asarray(X, dtype=float))
        columns = [f"x{j}" for j in range(values.shape[1])]
    y = np.asarray(y)

    def col_index(ref) -> int:
        if isinstance(ref, (int, np.integer)):
            if not 0 <= ref < values.shape[1]:
                raise UnknownColumn(f"column index {ref} out of range")
            return int(ref)
        try:
            return columns.index(ref)
        except ValueError:
            raise UnknownColumn(f"no column named {ref!r}") from None

    rng = np.random.default_rng(seed)
    baseline = _error(model, values, y, error_measure)
    n = values.shape[0]

    # one shared set of row permutations per repeat keeps single-column and
    # grouped scores comparable
    perms = [rng.permutation(n) for _ in range(repeats)]

    feature_raw = np.zeros(len(columns))
    for j in range(values.shape[1]):
        original = values[:, j].copy()
        errs = np.empty(repeats)
        for r, perm in enumerate(perms):
            values[:, j] = original[perm]
            errs[r] = _error(model, values, y, error_measure)
        values[:, j] = original
        feature_raw[j] = float(np.mean(errs) - baseline)
    feature_share = _normalize(feature_raw)

    group_entries = []
    if groups:
        names = list(groups.keys())
        raws = np.zeros(len(names))
        for g, name in enumerate(names):
            members = [col_index(ref) for ref in groups[name]]
            original = values[:, members].copy()
            errs = np.empty(repeats)
            for r, perm in enumerate(perms):
                values[:, members] = original[perm]
                errs[r] = _error(model, values, y, error_measure)
            values[:, members] = original
            raws[g] = float(np.mean(errs) - baseline)
        shares = _normalize(raws)
        group_entries = [ImportanceEntry(name, float(raw), float(share))
                         for name, raw, share in zip(names, raws, shares)]

    return ImportanceReport(
        features=[ImportanceEntry(name, float(raw), float(share))
                  for name, raw, share in zip(columns, feature_raw, feature_share)],
        groups=group_entries,
        baseline_error=float(baseline),
        error_measure=error_measure,
        repeats=repeats,
        seed=seed,
    )
