"""Random forest classifier built on Gini-impurity CART trees.

Each tree trains on a bootstrap resample (n draws with replacement) and
considers floor(sqrt(d)) randomly chosen candidate features at every node.
Per-tree seeds derive from the master seed, so fits are reproducible and
independent of evaluation order.  Prediction is by majority vote across
trees; a vote share of exactly 0.5 classifies as positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._estimator import ParamsMixin
from .errors import EmptyMatrix, SingleClass, UnknownColumn
from .features import FeatureMatrix

_NO_DEPTH_LIMIT = 1 << 30


@njit(cache=True)
def _build_tree(X, y, max_features, max_depth, min_samples_split, seed):
    n, d = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    count0 = np.zeros(cap, dtype=np.int64)
    count1 = np.zeros(cap, dtype=np.int64)

    np.random.seed(seed)
    idx = np.random.randint(0, n, n)

    stack_node = np.zeros(cap, dtype=np.int64)
    stack_start = np.zeros(cap, dtype=np.int64)
    stack_end = np.zeros(cap, dtype=np.int64)
    stack_depth = np.zeros(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_start[0] = 0
    stack_end[0] = n
    stack_depth[0] = 0
    n_nodes = 1

    feats = np.empty(d, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    labs = np.empty(n, dtype=np.int64)

    while top >= 0:
        node = stack_node[top]
        start = stack_start[top]
        end = stack_end[top]
        depth = stack_depth[top]
        top -= 1

        m = end - start
        n1 = 0
        for i in range(start, end):
            n1 += y[idx[i]]
        n0 = m - n1
        count0[node] = n0
        count1[node] = n1

        if n0 == 0 or n1 == 0 or m < min_samples_split or depth >= max_depth:
            continue

        # sample max_features candidate features without replacement
        for j in range(d):
            feats[j] = j
        k = max_features if max_features < d else d
        for j in range(k):
            swap = j + np.random.randint(0, d - j)
            tmp = feats[j]
            feats[j] = feats[swap]
            feats[swap] = tmp

        best_score = np.inf
        best_feature = -1
        best_threshold = 0.0
        for j in range(k):
            f = feats[j]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m])
            for i in range(m):
                labs[i] = y[idx[start + order[i]]]
            left1 = 0
            for split in range(1, m):
                left1 += labs[split - 1]
                lo = vals[order[split - 1]]
                hi = vals[order[split]]
                if hi <= lo:
                    continue
                nl = split
                nr = m - split
                left0 = nl - left1
                right1 = n1 - left1
                right0 = nr - right1
                gl = 1.0 - (left0 / nl) ** 2 - (left1 / nl) ** 2
                gr = 1.0 - (right0 / nr) ** 2 - (right1 / nr) ** 2
                score = nl * gl + nr * gr
                if score < best_score:
                    best_score = score
                    best_feature = f
                    mid = 0.5 * (lo + hi)
                    if mid <= lo:
                        mid = hi
                    best_threshold = mid

        if best_feature < 0:
            # no candidate feature admits a split; keep as (possibly impure) leaf
            continue

        # in-place partition of idx[start:end] on the chosen split
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_feature] < best_threshold:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1

        feature[node] = best_feature
        threshold[node] = best_threshold
        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        left[node] = left_id
        right[node] = right_id

        top += 1
        stack_node[top] = left_id
        stack_start[top] = start
        stack_end[top] = i
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = right_id
        stack_start[top] = i
        stack_end[top] = end
        stack_depth[top] = depth + 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            count0[:n_nodes].copy(), count1[:n_nodes].copy())


@njit(cache=True)
def _tree_votes(feature, threshold, left, right, count0, count1, X, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        if count1[node] >= count0[node]:
            out[i] += 1.0


@dataclass(frozen=True)
class Tree:
    """One trained decision tree; leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count0: np.ndarray
    count1: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def split_features(self) -> set:
        return {int(f) for f in self.feature if f >= 0}


def _as_array(X):
    if isinstance(X, FeatureMatrix):
        return np.ascontiguousarray(X.values, dtype=np.float64), tuple(X.columns)
    arr = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if arr.ndim != 2:
        raise EmptyMatrix(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr, None


class RandomForest(ParamsMixin):
    """Bagged Gini-impurity CART ensemble with the fit/predict interface.

    Parameters
    ----------
    n_trees : int
        Number of trees (default 100).
    max_depth : int or None
        Depth limit; None grows until leaves are pure or unsplittable.
    min_samples_split : int
        Smallest node size eligible for splitting.
    seed : int
        Master seed; per-tree seeds are derived deterministically.
    """

    def __init__(self, n_trees: int = 100, max_depth: int | None = None,
                 min_samples_split: int = 2, seed: int = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.seed = seed

    def fit(self, X, y):
        arr, columns = _as_array(X)
        y = np.asarray(y, dtype=np.int64)
        n, d = arr.shape
        if n == 0 or d == 0:
            raise EmptyMatrix(f"cannot train on a {n}x{d} matrix")
        if y.shape != (n,):
            raise ValueError(f"labels have shape {y.shape}, expected ({n},)")
        classes = np.unique(y)
        if not np.all(np.isin(classes, (0, 1))):
            raise ValueError("labels must be coded 0/1")
        if len(classes) < 2:
            raise SingleClass("training data contains a single class")
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")

        self.columns_ = columns
        self.n_features_ = d
        max_features = max(1, int(math.floor(math.sqrt(d))))
        depth_cap = self.max_depth if self.max_depth is not None else _NO_DEPTH_LIMIT
        tree_seeds = np.random.SeedSequence(self.seed).generate_state(self.n_trees)
        self.trees_ = []
        for s in tree_seeds:
            parts = _build_tree(arr, y, max_features, depth_cap,
                                self.min_samples_split, np.int64(s % (2 ** 31)))
            self.trees_.append(Tree(*parts))
        return self

    def _check_input(self, X):
        arr, columns = _as_array(X)
        if columns is not None and self.columns_ is not None and columns != self.columns_:
            unknown = set(columns) - set(self.columns_)
            if unknown:
                raise UnknownColumn(f"columns not seen in training: {sorted(unknown)}")
            raise UnknownColumn("column order differs from the training signature")
        if arr.shape[1] != self.n_features_:
            raise UnknownColumn(
                f"matrix has {arr.shape[1]} columns, model was trained on {self.n_features_}")
        return arr

    def predict_proba(self, X) -> np.ndarray:
        """Share of trees voting for the positive class, per row."""
        arr = self._check_input(X)
        votes = np.zeros(arr.shape[0], dtype=np.float64)
        for t in self.trees_:
            _tree_votes(t.feature, t.threshold, t.left, t.right,
                        t.count0, t.count1, arr, votes)
        return votes / len(self.trees_)

    def predict(self, X) -> np.ndarray:
        # exact 0.5 vote ties go to the positive class
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def split_features(self) -> set:
        """Union of feature indices used in any split of any tree."""
        used = set()
        for t in self.trees_:
            used |= t.split_features()
        return used
