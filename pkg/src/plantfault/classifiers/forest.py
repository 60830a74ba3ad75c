"""Random forest: bootstrap-weighted Gini trees with per-split feature sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from plantfault.classifiers.tree import (
    DecisionTree,
    _apply_packed,
    _as_matrix,
    as_rng,
    bin_features,
    fit_tree,
)


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    mtry: int
    n_features: int
    max_depth: int | None = None
    min_leaf: int = 1

    def __post_init__(self):
        self._pack()

    def _pack(self):
        sizes = [t.n_nodes for t in self.trees]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self._feature = np.concatenate([t.feature for t in self.trees])
        self._threshold = np.concatenate([t.threshold for t in self.trees])
        self._left = np.concatenate([t.left for t in self.trees])
        self._right = np.concatenate([t.right for t in self.trees])
        self._value = np.concatenate([t.value for t in self.trees])

    def predict_proba(self, X) -> np.ndarray:
        """Soft vote: mean of the trees' leaf probabilities for class 1."""
        X = _as_matrix(X, self.n_features)
        total = _apply_packed(X, self._feature, self._threshold, self._left, self._right,
                              self._value, self._offsets)
        return total / len(self.trees)

    @property
    def importance(self) -> np.ndarray:
        """Mean decrease in Gini impurity, averaged over trees, normalized to sum 1."""
        totals = np.mean([t.importance_totals() for t in self.trees], axis=0)
        s = totals.sum()
        return totals / s if s > 0 else np.zeros(self.n_features)


def bootstrap_weights(n: int, rng: np.random.Generator) -> np.ndarray:
    """Multiplicity of each row in an n-draw sample with replacement."""
    return np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float)


def fit_random_forest(X, y, n_trees=300, mtry=None, max_depth=None, min_leaf=1, rng=None) -> ForestModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n_trees < 1:
        raise ValueError("a forest needs at least one tree")
    if mtry is None:
        mtry = math.ceil(math.sqrt(p))
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must be in 1..{p}, got {mtry}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")
    if len(y) != n or not np.all((y == 0) | (y == 1)):
        raise ValueError("y must be 0/1 with one entry per row")
    rng = as_rng(rng)
    Xf = np.asfortranarray(X)
    binned = bin_features(X)
    trees = []
    for _ in range(n_trees):
        # a per-tree child stream keeps trees reproducible regardless of tree size
        tree_rng = np.random.default_rng(rng.integers(0, 2**63 - 1))
        w = bootstrap_weights(n, tree_rng)
        trees.append(fit_tree(Xf, y, max_depth=max_depth, min_leaf=min_leaf,
                              feature_subsample=mtry, rng=tree_rng, sample_weight=w,
                              split_mode="hist", binned=binned, check=False))
    return ForestModel(trees, mtry, p, max_depth, min_leaf)
