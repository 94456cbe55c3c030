"""Random forest: bootstrapped gini trees with per-split feature subsampling.

The forest probability is the arithmetic mean of member tree probabilities.
"""

from __future__ import annotations

import math

import numpy as np

from .base import LearnerSpec, TrainedModel, register_model_class
from .tree import DecisionTreeModel, fit_tree_arrays

DEFAULTS = {
    "tree_count": 100,
    "bootstrap": True,
    "feature_subsample": "sqrt",
    "max_depth": 12,
    "min_leaf": 2,
}


def _resolve_subsample(value, d: int) -> int:
    if value == "sqrt":
        return math.ceil(math.sqrt(d))
    if value == "all":
        return d
    try:
        k = int(value)
    except (TypeError, ValueError):
        k = 0
    if not 1 <= k <= d:
        raise ValueError(f"feature_subsample must be 'sqrt', 'all', or an int in [1, {d}]")
    return k


@register_model_class
class RandomForestModel(TrainedModel):
    kind = "forest"

    def __init__(self, trees, n_features, params, seed):
        self.trees = list(trees)
        self.n_features = int(n_features)
        self.params = dict(params)
        self.seed = int(seed)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        total = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            total += tree._proba(X)
        return total / len(self.trees)

    def fitted_state(self) -> dict:
        return {"trees": [t.to_doc() for t in self.trees]}

    @classmethod
    def _from_state(cls, doc: dict) -> "RandomForestModel":
        trees = [DecisionTreeModel._from_state(td) for td in doc["state"]["trees"]]
        return cls(trees, doc["n_features"], doc["params"], doc["seed"])


def train_random_forest(ds, spec: LearnerSpec) -> RandomForestModel:
    """Fit the forest; all sampling derives from ``spec.seed``."""
    params = spec.resolve(DEFAULTS)
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    tree_count = int(params["tree_count"])
    if tree_count < 1:
        raise ValueError("tree_count must be at least 1")
    n = ds.n_rows
    n_cand = _resolve_subsample(params["feature_subsample"], ds.n_features)
    rng = np.random.default_rng(spec.seed)
    trees = []
    for _ in range(tree_count):
        if params["bootstrap"]:
            rows = rng.integers(0, n, size=n, dtype=np.int64)
        else:
            rows = np.arange(n, dtype=np.int64)
        kernel_seed = int(rng.integers(0, 2**63, dtype=np.int64))
        trees.append(
            fit_tree_arrays(
                ds.features,
                ds.labels,
                max_depth=int(params["max_depth"]),
                min_leaf=int(params["min_leaf"]),
                n_candidate_features=n_cand,
                seed=kernel_seed,
                row_indices=rows,
            )
        )
    return RandomForestModel(trees, ds.n_features, params, spec.seed)
