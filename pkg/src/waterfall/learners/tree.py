"""CART decision trees and random forests."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _cart

UNBOUNDED_DEPTH = 10_000


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_leaf: int = 1
    max_features: int | None = None  # None: consider every column at each split
    seed: int = 0


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = 16
    min_samples_leaf: int = 1
    max_features: int | str | None = "sqrt"
    seed: int = 0
    n_jobs: int = 1


class ColumnIndex:
    """Per-column sorted distinct values and value codes, shared by all trees
    grown on the same matrix."""

    def __init__(self, X: np.ndarray):
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, d = X.shape
        codes = np.empty((n, d), dtype=np.int32)
        uniq, offsets = [], [0]
        for f in range(d):
            u, inv = np.unique(X[:, f], return_inverse=True)
            codes[:, f] = inv
            uniq.append(u)
            offsets.append(offsets[-1] + len(u))
        self.X = X
        self.codes = codes
        self.uniq = np.concatenate(uniq) if uniq else np.zeros(0)
        self.offsets = np.asarray(offsets, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # per node class counts (weighted by bootstrap multiplicity)
    classes: np.ndarray
    n_features: int
    params: TreeParams

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def leaf_class(self) -> np.ndarray:
        # argmax picks the smallest class on ties
        return self.classes[np.argmax(self.counts, axis=1)]

    def apply(self, X) -> np.ndarray:
        X = self._check(X)
        return _cart.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict_proba(self, X) -> np.ndarray:
        leaves = self.apply(X)
        c = self.counts[leaves]
        return c / c.sum(axis=1, keepdims=True)

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Leaf class and the leaf frequency of the largest class label.

        For binary 0/1 trees the score is the favorable-class frequency.
        """
        leaves = self.apply(X)
        c = self.counts[leaves]
        labels = self.classes[np.argmax(c, axis=1)]
        scores = c[:, -1] / c.sum(axis=1)
        return labels, scores

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got shape {X.shape}")
        return X


def _resolve_max_features(value, d: int) -> int:
    if value is None:
        return d
    if value == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    return max(1, min(int(value), d))


def _grow(index: ColumnIndex, y_codes, weights, n_classes, params: TreeParams, classes, seed) -> DecisionTree:
    max_depth = UNBOUNDED_DEPTH if params.max_depth is None else int(params.max_depth)
    d = index.X.shape[1]
    mf = _resolve_max_features(params.max_features, d)
    feature, threshold, left, right, counts = _cart.build_tree(
        index.X, index.codes, index.uniq, index.offsets, y_codes, weights.astype(np.float64),
        n_classes, max_depth, float(params.min_samples_leaf), mf, np.uint64(seed),
    )
    return DecisionTree(feature, threshold, left, right, counts, classes, d, params)


def fit_tree(X, y, params: TreeParams = TreeParams(), classes=None,
             index: ColumnIndex | None = None) -> DecisionTree:
    """Greedy CART with Gini impurity.

    Thresholds are midpoints between consecutive distinct values. Ties in
    impurity decrease go to the lowest column index, then the lowest
    threshold.
    """
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("cannot fit a tree on empty input")
    index = index or ColumnIndex(X)
    if index.X.shape[0] != len(y):
        raise ValueError("X and y lengths differ")
    classes = np.unique(y) if classes is None else np.asarray(classes)
    y_codes = np.searchsorted(classes, y).astype(np.int64)
    if not np.array_equal(classes[y_codes], y):
        raise ValueError("y contains labels outside classes")
    weights = np.ones(len(y))
    return _grow(index, y_codes, weights, len(classes), params, classes, params.seed)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[DecisionTree, ...]
    params: ForestParams
    oob_scores: np.ndarray  # out-of-bag favorable vote fraction per training row

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def votes(self, X) -> np.ndarray:
        X = self.trees[0]._check(X)
        return np.stack([t.predict(X)[0] for t in self.trees])

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Majority vote; score is the fraction of trees voting favorable."""
        votes = self.votes(X)
        scores = votes.mean(axis=0)
        if len(self.trees) == 1:
            return votes[0].astype(np.int64), scores
        return (scores >= 0.5).astype(np.int64), scores


def _tree_seed(seed: int, t: int) -> tuple[np.ndarray, int]:
    rng = np.random.default_rng([seed, t])
    return rng, int(rng.integers(0, 2**63 - 1))


def fit_forest(X, y, params: ForestParams = ForestParams()) -> Forest:
    """Bootstrap-aggregated CART on a binary 0/1 target.

    Tree ``t`` draws its bootstrap sample and feature subsets from a stream
    seeded by ``(seed, t)``, so results do not depend on ``n_jobs``.
    """
    y = np.asarray(y).astype(np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("cannot fit a forest on empty input")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("forest target must be 0/1")
    index = ColumnIndex(X)
    classes = np.array([0, 1])
    tree_params = TreeParams(params.max_depth, params.min_samples_leaf, params.max_features, params.seed)

    def one(t):
        rng, tseed = _tree_seed(params.seed, t)
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n)
        tree = _grow(index, y, weights, 2, tree_params, classes, tseed)
        return tree, weights == 0

    if params.n_jobs > 1:
        with ThreadPoolExecutor(params.n_jobs) as pool:
            grown = list(pool.map(one, range(params.n_trees)))
    else:
        grown = [one(t) for t in range(params.n_trees)]

    trees = tuple(g[0] for g in grown)
    oob_votes = np.zeros(n)
    oob_n = np.zeros(n)
    for tree, oob in grown:
        if oob.any():
            oob_votes[oob] += tree.predict(index.X[oob])[0]
            oob_n[oob] += 1
    forest = Forest(trees, params, np.zeros(n))
    scores = np.divide(oob_votes, oob_n, out=np.zeros(n), where=oob_n > 0)
    never = oob_n == 0
    if never.any():
        scores[never] = forest.predict(index.X[never])[1]
    return Forest(trees, params, scores)


def predict(model, X) -> tuple[np.ndarray, np.ndarray]:
    """(labels, scores) for any fitted learner in this package."""
    return model.predict(X)
