"""KNN and Gaussian naive Bayes, kept as comparison baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from plantfault.classifiers.tree import _as_matrix


@dataclass
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 10

    def predict_proba(self, X) -> np.ndarray:
        """Fraction of positive labels among the k nearest training rows.

        Equal distances are broken by training row order.
        """
        X = _as_matrix(X, self.X.shape[1])
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            d = np.sum((self.X - x) ** 2, axis=1)
            nearest = np.argsort(d, kind="stable")[: self.k]
            out[i] = self.y[nearest].mean()
        return out


@dataclass
class GaussianNbModel:
    means: np.ndarray  # (2, p)
    variances: np.ndarray  # (2, p)
    priors: np.ndarray  # (2,)

    def predict_proba(self, X) -> np.ndarray:
        X = _as_matrix(X, self.means.shape[1])
        log_post = np.empty((X.shape[0], 2))
        for c in (0, 1):
            if self.priors[c] == 0:
                log_post[:, c] = -np.inf
                continue
            ll = -0.5 * (np.log(2 * np.pi * self.variances[c]) + (X - self.means[c]) ** 2 / self.variances[c])
            log_post[:, c] = np.log(self.priors[c]) + ll.sum(axis=1)
        top = np.max(log_post, axis=1, keepdims=True)
        post = np.exp(log_post - top)
        return post[:, 1] / post.sum(axis=1)


def fit_knn(X, y, k=10) -> KnnModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > X.shape[0]:
        raise ValueError(f"k={k} exceeds the {X.shape[0]} training rows")
    return KnnModel(X.copy(), y.copy(), int(k))


def fit_gaussian_nb(X, y) -> GaussianNbModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    p = X.shape[1]
    eps = 1e-9 * (X.var(axis=0) + 1.0)
    means = np.zeros((2, p))
    variances = np.tile(eps, (2, 1))
    priors = np.zeros(2)
    for c in (0, 1):
        rows = X[y == c]
        priors[c] = len(rows) / len(y)
        if len(rows):
            means[c] = rows.mean(axis=0)
            variances[c] = np.maximum(rows.var(axis=0), eps)
    return GaussianNbModel(means, variances, priors)


def fit_baseline(X, y, variant="knn", **params):
    if variant == "knn":
        return fit_knn(X, y, **params)
    if variant in ("gaussian_nb", "nb"):
        return fit_gaussian_nb(X, y)
    raise ValueError(f"unknown baseline {variant!r}")
