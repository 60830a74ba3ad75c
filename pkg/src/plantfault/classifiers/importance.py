"""Ranked impurity-based importance for forests and boosted models."""

from __future__ import annotations

import numpy as np


def feature_importance(model, names=None, top_k=None) -> list[tuple[str, float]]:
    """(feature, score) pairs in descending score order, ties by feature index."""
    scores = getattr(model, "importance", None)
    if scores is None:
        raise ValueError(f"{type(model).__name__} has no importance scores (is it fitted?)")
    scores = np.asarray(scores, dtype=float)
    if names is None:
        names = [f"x{i}" for i in range(len(scores))]
    if len(names) != len(scores):
        raise ValueError(f"{len(names)} names for {len(scores)} features")
    order = np.lexsort((np.arange(len(scores)), -scores))
    if top_k is not None:
        order = order[:top_k]
    return [(names[i], float(scores[i])) for i in order]


def format_importance(ranked, digits=4) -> str:
    """Two-column "covariate, score" text block."""
    lines = ["covariate,score"]
    lines += [f"{name},{score:.{digits}f}" for name, score in ranked]
    return "\n".join(lines)
