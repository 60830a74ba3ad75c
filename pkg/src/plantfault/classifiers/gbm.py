"""Gradient boosting with logistic loss.

Each stage fits a squared-error regression tree to the pseudo-residuals
``y - p`` and then replaces every leaf value by one Newton step,
``sum(r) / sum(p (1 - p))`` over the rows in that leaf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from plantfault.classifiers.tree import (
    DecisionTree,
    _apply_packed,
    _as_matrix,
    as_rng,
    fit_tree,
    presort_features,
)

PREVALENCE_CLIP = 1e-6
HESSIAN_FLOOR = 1e-12


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def logistic_loss(y, raw) -> float:
    """Mean negative log-likelihood for 0/1 ``y`` at raw scores ``raw``."""
    y = np.asarray(y, dtype=float)
    raw = np.asarray(raw, dtype=float)
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


@dataclass
class GbmModel:
    base_score: float
    stages: list[DecisionTree]
    learning_rate: float
    tree_number: int
    tree_depth: int
    n_features: int
    train_loss: list[float] = field(default_factory=list)
    prevalence: float | None = None  # training mean of y

    def decision_function(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        raw = np.full(X.shape[0], self.base_score)
        if self.stages:
            if not hasattr(self, "_packed"):
                self._pack()
            f, t, l, r, v, off = self._packed
            raw += self.learning_rate * _apply_packed(X, f, t, l, r, v, off)
        return raw

    def _pack(self):
        sizes = [s.n_nodes for s in self.stages]
        off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self._packed = tuple(np.concatenate([getattr(s, a) for s in self.stages])
                             for a in ("feature", "threshold", "left", "right", "value")) + (off,)

    def predict_proba(self, X) -> np.ndarray:
        if not self.stages and self.prevalence is not None:
            # sigmoid(logit(p)) can be off by an ulp
            return np.full(_as_matrix(X, self.n_features).shape[0], self.prevalence)
        return sigmoid(self.decision_function(X))

    @property
    def importance(self) -> np.ndarray:
        """Squared-error decrease summed over all stages, normalized to sum 1."""
        if not self.stages:
            return np.zeros(self.n_features)
        totals = np.sum([s.importance_totals() for s in self.stages], axis=0)
        total = totals.sum()
        return totals / total if total > 0 else np.zeros(self.n_features)


def fit_gbm(X, y, tree_number=200, tree_depth=5, learning_rate=0.1, rng=None, min_leaf=1) -> GbmModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)}")
    if n == 0:
        raise ValueError("cannot fit on zero rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("targets must be 0/1")
    if tree_number < 0:
        raise ValueError("tree_number must be >= 0")
    if not 0 < learning_rate <= 1:
        raise ValueError("learning_rate must be in (0, 1]")
    rng = as_rng(rng)

    prevalence = float(np.clip(y.mean(), PREVALENCE_CLIP, 1 - PREVALENCE_CLIP))
    base = float(np.log(prevalence / (1 - prevalence)))
    raw = np.full(n, base)
    losses = [logistic_loss(y, raw)]
    stages = []
    Xf = np.asfortranarray(X)
    order = presort_features(X)
    for _ in range(tree_number):
        prob = sigmoid(raw)
        resid = y - prob
        tree, leaves = fit_tree(Xf, resid, max_depth=tree_depth, min_leaf=min_leaf,
                                regression=True, rng=rng, return_leaves=True,
                                split_mode="presort", presorted=order, check=False)
        num = np.bincount(leaves, weights=resid, minlength=tree.n_nodes)
        den = np.bincount(leaves, weights=prob * (1 - prob), minlength=tree.n_nodes)
        is_leaf = tree.feature < 0
        tree.value = np.where(is_leaf, num / np.maximum(den, HESSIAN_FLOOR), 0.0)
        raw = raw + learning_rate * tree.value[leaves]
        stages.append(tree)
        losses.append(logistic_loss(y, raw))
    return GbmModel(base, stages, learning_rate, tree_number, tree_depth, p, losses, float(y.mean()))
