"""JSON round-trip for fitted models."""

from __future__ import annotations

import json

import numpy as np

from plantfault.classifiers.baselines import GaussianNbModel, KnnModel
from plantfault.classifiers.forest import ForestModel
from plantfault.classifiers.gbm import GbmModel
from plantfault.classifiers.logit import RidgeLogitModel
from plantfault.classifiers.tree import DecisionTree

FORMAT = "plantfault-model"
VERSION = 1

_TREE_ARRAYS = ("feature", "threshold", "left", "right", "value", "impurity", "weight", "decrease")


def _tree_to_dict(t: DecisionTree) -> dict:
    d = {a: getattr(t, a).tolist() for a in _TREE_ARRAYS}
    d.update(n_features=t.n_features, regression=t.regression)
    return d


def _tree_from_dict(d: dict) -> DecisionTree:
    arrays = {a: np.asarray(d[a], dtype=np.int64 if a in ("feature", "left", "right") else float)
              for a in _TREE_ARRAYS}
    return DecisionTree(**arrays, n_features=d["n_features"], regression=d["regression"])


def model_to_dict(model) -> dict:
    head = {"format": FORMAT, "version": VERSION}
    if isinstance(model, DecisionTree):
        return {**head, "kind": "tree", "tree": _tree_to_dict(model)}
    if isinstance(model, ForestModel):
        return {**head, "kind": "forest",
                "params": {"mtry": model.mtry, "n_features": model.n_features,
                           "max_depth": model.max_depth, "min_leaf": model.min_leaf},
                "trees": [_tree_to_dict(t) for t in model.trees]}
    if isinstance(model, GbmModel):
        return {**head, "kind": "gbm",
                "params": {"base_score": model.base_score, "learning_rate": model.learning_rate,
                           "tree_number": model.tree_number, "tree_depth": model.tree_depth,
                           "n_features": model.n_features, "prevalence": model.prevalence},
                "train_loss": list(model.train_loss),
                "stages": [_tree_to_dict(t) for t in model.stages]}
    if isinstance(model, RidgeLogitModel):
        return {**head, "kind": "ridge_logit",
                "params": {"lam": model.lam, "converged": model.converged,
                           "iterations": model.iterations, "grad_norm": model.grad_norm},
                "weights": model.weights.tolist(), "intercept": model.intercept}
    if isinstance(model, KnnModel):
        return {**head, "kind": "knn", "params": {"k": model.k},
                "X": model.X.tolist(), "y": model.y.tolist()}
    if isinstance(model, GaussianNbModel):
        return {**head, "kind": "gaussian_nb", "means": model.means.tolist(),
                "variances": model.variances.tolist(), "priors": model.priors.tolist()}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ValueError("not a plantfault model document")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    kind = d["kind"]
    if kind == "tree":
        return _tree_from_dict(d["tree"])
    if kind == "forest":
        p = d["params"]
        return ForestModel([_tree_from_dict(t) for t in d["trees"]], p["mtry"], p["n_features"],
                           p["max_depth"], p["min_leaf"])
    if kind == "gbm":
        p = d["params"]
        return GbmModel(p["base_score"], [_tree_from_dict(t) for t in d["stages"]], p["learning_rate"],
                        p["tree_number"], p["tree_depth"], p["n_features"], d.get("train_loss", []),
                        p.get("prevalence"))
    if kind == "ridge_logit":
        p = d["params"]
        return RidgeLogitModel(np.asarray(d["weights"], float), d["intercept"], p["lam"],
                               p["converged"], p["iterations"], p["grad_norm"])
    if kind == "knn":
        return KnnModel(np.asarray(d["X"], float), np.asarray(d["y"], float), d["params"]["k"])
    if kind == "gaussian_nb":
        return GaussianNbModel(np.asarray(d["means"]), np.asarray(d["variances"]), np.asarray(d["priors"]))
    raise ValueError(f"unknown model kind {kind!r}")


def dumps(model) -> str:
    return json.dumps(model_to_dict(model))


def loads(text: str):
    return model_from_dict(json.loads(text))
