"""Gini decision trees and bootstrap random forests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ModelError
from .dataset import Label, LabeledDataset, Normalization, normalize

DEFAULT_MAX_DEPTH = 12
DEFAULT_MIN_SAMPLES_LEAF = 1
DEFAULT_N_TREES = 25
SPLIT_EPS = 1e-12
LEAF = -1


@dataclass
class DecisionTreeModel:
    """Flat array encoding of a binary tree.

    Node ``i`` is a leaf when ``feature[i] == -1``; otherwise rows with
    ``x[feature] <= threshold`` go to ``left[i]``.  ``counts[i]`` holds the
    (benign, anomalous) training rows that reached the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    counts: np.ndarray
    max_depth: int
    min_samples_leaf: int
    normalization: Optional[Normalization] = None

    kind = "dtree"

    @property
    def node_count(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] == LEAF:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def leaf_of(self, z) -> int:
        i = 0
        while self.feature[i] != LEAF:
            i = self.left[i] if z[self.feature[i]] <= self.threshold[i] else self.right[i]
        return int(i)

    def _code(self, z) -> int:
        return int(self.value[self.leaf_of(z)])

    def predict_code(self, fv) -> int:
        return self._code(self._scale(fv))

    def predict(self, fv) -> Label:
        return Label.from_code(self.predict_code(fv))

    def predict_many(self, X) -> np.ndarray:
        Z = self._scale(X)
        return np.array([self._code(z) for z in Z], dtype=np.int64)

    def _scale(self, X):
        X = np.asarray(X, dtype=float)
        return self.normalization.transform(X) if self.normalization is not None else X


def gini(pos: int, n: int) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _feature_candidates(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Impurity decrease for every midpoint split of one feature column.

    Returns (thresholds, decreases) in ascending threshold order.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.shape[0]
    cut = np.flatnonzero(xs[1:] != xs[:-1])  # left side = first cut+1 rows
    if cut.size == 0:
        return cut.astype(float), cut.astype(float)
    n_left = (cut + 1).astype(float)
    n_right = n - n_left
    ok = (n_left >= min_leaf) & (n_right >= min_leaf)
    cut, n_left, n_right = cut[ok], n_left[ok], n_right[ok]
    cum = np.cumsum(ys)
    pos = float(cum[-1])
    pl = cum[cut].astype(float)
    pr = pos - pl
    # weighted child impurity = 1 - S/n with S = sum over children of (p^2 + q^2)/m
    s = (pl ** 2 + (n_left - pl) ** 2) / n_left + (pr ** 2 + (n_right - pr) ** 2) / n_right
    dec = gini(int(pos), n) - (1.0 - s / n)
    thr = (xs[cut] + xs[cut + 1]) / 2.0
    return thr, dec


def best_split(X: np.ndarray, y: np.ndarray, features, min_leaf: int = 1):
    """Best (feature, threshold, decrease) or None when no split helps.

    The winner is the first candidate in (feature, threshold) order whose
    decrease is within SPLIT_EPS of the maximum.
    """
    per_feature = []
    top = -math.inf
    for f in sorted(int(f) for f in features):
        thr, dec = _feature_candidates(X[:, f], y, min_leaf)
        if dec.size:
            per_feature.append((f, thr, dec))
            top = max(top, float(dec.max()))
    if not per_feature or top <= SPLIT_EPS:
        return None
    for f, thr, dec in per_feature:
        hit = np.flatnonzero(dec >= top - SPLIT_EPS)
        if hit.size:
            j = int(hit[0])
            return f, float(thr[j]), float(dec[j])
    return None


def _leaf_label(pos: int, n: int) -> int:
    # ties go to ANOMALOUS
    return int(2 * pos >= n) if n else 0


def _grow(X, y, max_depth, min_leaf, pick_features, normalization=None) -> DecisionTreeModel:
    feature, threshold, left, right, value, counts = [], [], [], [], [], []

    def new_node(yy):
        pos = int(yy.sum())
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(_leaf_label(pos, yy.shape[0]))
        counts.append((yy.shape[0] - pos, pos))
        return len(feature) - 1

    stack = [(np.arange(X.shape[0]), 0, new_node(y))]
    while stack:
        rows, depth, node = stack.pop()
        yy = y[rows]
        pos = int(yy.sum())
        if depth >= max_depth or pos == 0 or pos == rows.shape[0]:
            continue
        split = best_split(X[rows], yy, pick_features(), min_leaf)
        if split is None:
            continue
        f, thr, _ = split
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(y[lrows])
        right[node] = new_node(y[rrows])
        # right first so the left subtree gets lower node ids
        stack.append((rrows, depth + 1, right[node]))
        stack.append((lrows, depth + 1, left[node]))

    return DecisionTreeModel(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.int64),
        np.array(counts, dtype=np.int64).reshape(-1, 2),
        max_depth,
        min_leaf,
        normalization,
    )


def _check_tree_params(max_depth, min_samples_leaf):
    if max_depth < 0:
        raise ModelError("BAD_HYPERPARAMETER", f"max_depth must be >= 0, got {max_depth}")
    if min_samples_leaf < 1:
        raise ModelError("BAD_HYPERPARAMETER", f"min_samples_leaf must be >= 1, got {min_samples_leaf}")


def dt_train(dataset: LabeledDataset, max_depth: int = DEFAULT_MAX_DEPTH,
             min_samples_leaf: int = DEFAULT_MIN_SAMPLES_LEAF, seed: int = 0) -> DecisionTreeModel:
    """Greedy Gini tree.  ``seed`` is accepted for interface symmetry; the
    exhaustive split search consumes no randomness."""
    if len(dataset) == 0:
        raise ModelError("EMPTY_DATASET", "decision tree needs at least one row")
    _check_tree_params(max_depth, min_samples_leaf)
    scaled, params = normalize(dataset)
    all_features = list(range(scaled.dim))
    return _grow(scaled.X, scaled.y, max_depth, min_samples_leaf, lambda: all_features, params)


def dt_predict(model: DecisionTreeModel, fv) -> Label:
    return model.predict(fv)


@dataclass
class RandomForestModel:
    trees: list
    tree_seeds: list
    features_per_split: int
    bootstrap: bool
    normalization: Normalization
    seed: int = 0
    max_depth: int = DEFAULT_MAX_DEPTH
    min_samples_leaf: int = DEFAULT_MIN_SAMPLES_LEAF

    kind = "rforest"

    def __post_init__(self):
        if not self.trees:
            raise ModelError("BAD_HYPERPARAMETER", "a forest needs at least one tree")

    def votes(self, z) -> np.ndarray:
        return np.array([t._code(z) for t in self.trees], dtype=np.int64)

    def _code(self, z) -> int:
        v = self.votes(z)
        return int(2 * v.sum() >= v.shape[0])  # ties go to ANOMALOUS

    def predict_code(self, fv) -> int:
        return self._code(self.normalization.transform(fv))

    def predict(self, fv) -> Label:
        return Label.from_code(self.predict_code(fv))

    def predict_many(self, X) -> np.ndarray:
        Z = self.normalization.transform(X)
        return np.array([self._code(z) for z in Z], dtype=np.int64)


def rf_train(dataset: LabeledDataset, n_trees: int = DEFAULT_N_TREES,
             features_per_split: Optional[int] = None, seed: int = 0,
             bootstrap: bool = True, max_depth: int = DEFAULT_MAX_DEPTH,
             min_samples_leaf: int = DEFAULT_MIN_SAMPLES_LEAF) -> RandomForestModel:
    if len(dataset) == 0:
        raise ModelError("EMPTY_DATASET", "random forest needs at least one row")
    if n_trees < 1:
        raise ModelError("BAD_HYPERPARAMETER", f"n_trees must be >= 1, got {n_trees}")
    _check_tree_params(max_depth, min_samples_leaf)
    scaled, params = normalize(dataset)
    d = scaled.dim
    m = max(1, int(round(math.sqrt(d)))) if features_per_split is None else int(features_per_split)
    if not 1 <= m <= d:
        raise ModelError("BAD_HYPERPARAMETER", f"features_per_split must be in [1, {d}], got {m}")
    n = len(scaled)
    master = np.random.default_rng(seed)
    tree_seeds = [int(s) for s in master.integers(0, 2 ** 32, size=n_trees)]
    trees = []
    for ts in tree_seeds:
        rng = np.random.default_rng(ts)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        if m == d:
            pick = lambda: range(d)
        else:
            pick = lambda rng=rng: rng.choice(d, size=m, replace=False)
        tree = _grow(scaled.X[idx], scaled.y[idx], max_depth, min_samples_leaf, pick, None)
        trees.append(tree)
    return RandomForestModel(trees, tree_seeds, m, bootstrap, params, seed, max_depth, min_samples_leaf)


def rf_predict(model: RandomForestModel, fv) -> Label:
    return model.predict(fv)
