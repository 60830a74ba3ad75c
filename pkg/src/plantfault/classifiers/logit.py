"""l2-penalized logistic regression fitted by damped Newton.

Objective::

    (1/n) sum_i log(1 + exp(-(2 y_i - 1)(w . x_i + b))) + (lam / 2) ||w||^2

The intercept is not penalized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from plantfault.classifiers.gbm import sigmoid
from plantfault.classifiers.tree import _as_matrix

logger = logging.getLogger(__name__)


@dataclass
class RidgeLogitModel:
    weights: np.ndarray
    intercept: float
    lam: float
    converged: bool
    iterations: int
    grad_norm: float

    def decision_function(self, X) -> np.ndarray:
        return _as_matrix(X, len(self.weights)) @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))


def ridge_logit_objective(w, b, X, y, lam) -> float:
    z = X @ w + b
    s = 2.0 * np.asarray(y, dtype=float) - 1.0
    return float(np.mean(np.logaddexp(0.0, -s * z)) + 0.5 * lam * np.dot(w, w))


def ridge_logit_gradient(w, b, X, y, lam) -> tuple[np.ndarray, float]:
    """Analytic gradient of the objective with respect to (w, b)."""
    n = X.shape[0]
    r = sigmoid(X @ w + b) - y
    return X.T @ r / n + lam * w, float(r.sum() / n)


def fit_ridge_logit(X, y, lam=1.0, tolerance=1e-8, max_iter=100) -> RidgeLogitModel:
    """Minimize the penalized objective from w = 0, b = 0.

    Stops when the largest absolute gradient entry is at most ``tolerance``.
    A model that hits ``max_iter`` is returned with ``converged=False``.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if len(y) != n or n == 0:
        raise ValueError("X and y must have the same, nonzero number of rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    if lam < 0:
        raise ValueError("penalty must be nonnegative")

    w = np.zeros(p)
    b = 0.0
    f = ridge_logit_objective(w, b, X, y, lam)
    penalty = np.full(p + 1, lam)
    penalty[p] = 0.0
    it = 0
    gmax = np.inf
    for it in range(max_iter + 1):
        gw, gb = ridge_logit_gradient(w, b, X, y, lam)
        grad = np.append(gw, gb)
        gmax = float(np.max(np.abs(grad)))
        if gmax <= tolerance or it == max_iter:
            break
        prob = sigmoid(X @ w + b)
        h = prob * (1 - prob) / n
        Xh = X * h[:, None]
        H = np.empty((p + 1, p + 1))
        H[:p, :p] = X.T @ Xh
        H[:p, p] = H[p, :p] = Xh.sum(axis=0)
        H[p, p] = h.sum()
        H[np.diag_indices(p + 1)] += penalty + 1e-12
        try:
            step = -cho_solve(cho_factor(H), grad)
        except LinAlgError:
            step = -grad
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -float(grad @ grad)
        t = 1.0
        while True:
            w_new, b_new = w + t * step[:p], b + t * step[p]
            f_new = ridge_logit_objective(w_new, b_new, X, y, lam)
            if f_new <= f + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if f_new > f:
            # no descent possible at machine precision
            break
        w, b, f = w_new, b_new, f_new
    converged = gmax <= tolerance
    if not converged:
        logger.info("ridge logit stopped after %d iterations, |grad|_inf=%.3g", it, gmax)
    return RidgeLogitModel(w, float(b), float(lam), converged, it, gmax)
