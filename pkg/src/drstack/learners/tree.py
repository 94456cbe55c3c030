"""Greedy binary decision tree minimizing gini impurity.

Used standalone, as the forest member, and as the wrapper evaluator.  Growth
runs in a compiled kernel over flat node arrays; candidate thresholds are
midpoints between adjacent distinct sorted values, children must keep at
least min_leaf rows, and ties break toward the lower feature index and the
lower threshold.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .base import LearnerSpec, TrainedModel, register_model_class

DEFAULTS = {"max_depth": 12, "min_leaf": 2}


@njit(cache=True)
def _mix64(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@njit(cache=True)
def _grow(X, y, idx, max_depth, min_leaf, n_cand, seed):
    n = idx.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    prob = np.zeros(cap, np.float64)
    node_lo = np.zeros(cap, np.int64)
    node_hi = np.zeros(cap, np.int64)
    node_depth = np.zeros(cap, np.int64)
    buf = idx.copy()
    tmp_left = np.empty(n, np.int64)
    tmp_right = np.empty(n, np.int64)
    featbuf = np.empty(d, np.int64)
    stack = np.empty(cap, np.int64)
    node_lo[0] = 0
    node_hi[0] = n
    stack[0] = 0
    top = 1
    n_nodes = 1
    state = seed
    while top > 0:
        top -= 1
        nd = stack[top]
        lo = node_lo[nd]
        hi = node_hi[nd]
        depth = node_depth[nd]
        m = hi - lo
        c1 = 0
        for i in range(lo, hi):
            c1 += y[buf[i]]
        prob[nd] = c1 / m
        if depth >= max_depth or m < 2 * min_leaf or c1 == 0 or c1 == m:
            continue
        k = n_cand if n_cand < d else d
        for j in range(d):
            featbuf[j] = j
        for j in range(k):
            state, z = _mix64(state)
            pick = j + np.int64(z % np.uint64(d - j))
            featbuf[j], featbuf[pick] = featbuf[pick], featbuf[j]
        for j in range(1, k):
            key = featbuf[j]
            i = j - 1
            while i >= 0 and featbuf[i] > key:
                featbuf[i + 1] = featbuf[i]
                i -= 1
            featbuf[i + 1] = key
        best_cost = np.inf
        best_f = -1
        best_t = 0.0
        vals = np.empty(m, np.float64)
        for jj in range(k):
            f = featbuf[jj]
            for i in range(m):
                vals[i] = X[buf[lo + i], f]
            order = np.argsort(vals)
            c1l = 0
            for p in range(1, m):
                c1l += y[buf[lo + order[p - 1]]]
                vl = vals[order[p - 1]]
                vr = vals[order[p]]
                if vr <= vl:
                    continue
                if p < min_leaf or m - p < min_leaf:
                    continue
                mid = 0.5 * (vl + vr)
                if mid <= vl or mid >= vr:
                    continue
                nl = float(p)
                nr = float(m - p)
                p1l = c1l / nl
                p1r = (c1 - c1l) / nr
                cost = nl * (1.0 - p1l * p1l - (1.0 - p1l) * (1.0 - p1l)) + nr * (
                    1.0 - p1r * p1r - (1.0 - p1r) * (1.0 - p1r)
                )
                if cost < best_cost:
                    best_cost = cost
                    best_f = f
                    best_t = mid
        if best_f < 0:
            continue
        nl = 0
        nr = 0
        for i in range(lo, hi):
            r = buf[i]
            if X[r, best_f] <= best_t:
                tmp_left[nl] = r
                nl += 1
            else:
                tmp_right[nr] = r
                nr += 1
        for i in range(nl):
            buf[lo + i] = tmp_left[i]
        for i in range(nr):
            buf[lo + nl + i] = tmp_right[i]
        feat[nd] = best_f
        thr[nd] = best_t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[nd] = lc
        right[nd] = rc
        node_lo[lc] = lo
        node_hi[lc] = lo + nl
        node_depth[lc] = depth + 1
        node_lo[rc] = lo + nl
        node_hi[rc] = hi
        node_depth[rc] = depth + 1
        stack[top] = rc
        top += 1
        stack[top] = lc
        top += 1
    return (
        feat[:n_nodes].copy(),
        thr[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        prob[:n_nodes].copy(),
    )


@register_model_class
class DecisionTreeModel(TrainedModel):
    kind = "tree"

    def __init__(self, feature, threshold, left, right, prob, n_features, params, seed=0):
        self.node_feature = np.asarray(feature, dtype=np.int64)
        self.node_threshold = np.asarray(threshold, dtype=np.float64)
        self.node_left = np.asarray(left, dtype=np.int64)
        self.node_right = np.asarray(right, dtype=np.int64)
        self.node_prob = np.asarray(prob, dtype=np.float64)
        self.n_features = int(n_features)
        self.params = dict(params)
        self.seed = int(seed)

    @property
    def n_nodes(self) -> int:
        return self.node_feature.shape[0]

    def _proba(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            rows = np.flatnonzero(self.node_feature[node] >= 0)
            if rows.size == 0:
                break
            cur = node[rows]
            go_left = X[rows, self.node_feature[cur]] <= self.node_threshold[cur]
            node[rows] = np.where(go_left, self.node_left[cur], self.node_right[cur])
        return self.node_prob[node]

    def fitted_state(self) -> dict:
        return {
            "feature": self.node_feature,
            "threshold": self.node_threshold,
            "left": self.node_left,
            "right": self.node_right,
            "prob": self.node_prob,
        }

    @classmethod
    def _from_state(cls, doc: dict) -> "DecisionTreeModel":
        s = doc["state"]
        return cls(
            s["feature"], s["threshold"], s["left"], s["right"], s["prob"],
            doc["n_features"], doc["params"], doc["seed"],
        )


def fit_tree_arrays(
    X: np.ndarray,
    y: np.ndarray,
    *,
    max_depth: int,
    min_leaf: int,
    n_candidate_features: int | None = None,
    seed: int = 0,
    row_indices: np.ndarray | None = None,
) -> DecisionTreeModel:
    """Grow a tree directly on arrays; row_indices selects (possibly repeated) rows."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    if min_leaf < 1:
        raise ValueError("min_leaf must be at least 1")
    d = X.shape[1]
    n_cand = d if n_candidate_features is None else int(n_candidate_features)
    if not 1 <= n_cand <= d:
        raise ValueError(f"n_candidate_features must be in [1, {d}]")
    if row_indices is None:
        row_indices = np.arange(X.shape[0], dtype=np.int64)
    else:
        row_indices = np.ascontiguousarray(row_indices, dtype=np.int64)
        if row_indices.size == 0:
            raise ValueError("empty dataset")
    nodes = _grow(X, y, row_indices, max_depth, min_leaf, n_cand, np.uint64(seed))
    return DecisionTreeModel(
        *nodes,
        n_features=d,
        params={"max_depth": max_depth, "min_leaf": min_leaf},
        seed=seed,
    )


def train_decision_tree(ds, spec: LearnerSpec) -> DecisionTreeModel:
    """Fit a gini decision tree on the dataset; all features are candidates."""
    params = spec.resolve(DEFAULTS)
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    return fit_tree_arrays(
        ds.features,
        ds.labels,
        max_depth=int(params["max_depth"]),
        min_leaf=int(params["min_leaf"]),
        seed=spec.seed,
    )
