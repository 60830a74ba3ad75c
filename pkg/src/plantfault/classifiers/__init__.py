"""From-scratch binary probabilistic classifiers.

Every fitted model exposes ``predict_proba(X)`` returning the probability of
class 1 as a 1-D array.
"""

from plantfault.classifiers.baselines import GaussianNbModel, KnnModel, fit_baseline
from plantfault.classifiers.forest import ForestModel, fit_random_forest
from plantfault.classifiers.gbm import GbmModel, fit_gbm
from plantfault.classifiers.importance import feature_importance
from plantfault.classifiers.logit import RidgeLogitModel, fit_ridge_logit
from plantfault.classifiers.tree import DecisionTree, fit_tree, gini_impurity

__all__ = [
    "DecisionTree",
    "ForestModel",
    "GaussianNbModel",
    "GbmModel",
    "KnnModel",
    "RidgeLogitModel",
    "feature_importance",
    "fit_baseline",
    "fit_gbm",
    "fit_random_forest",
    "fit_ridge_logit",
    "fit_tree",
    "gini_impurity",
]
