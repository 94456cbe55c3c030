"""Feature ranking by discretized information gain and by a greedy wrapper.

Numeric columns are discretized with recursive binary MDL cuts, then scored
by information gain against the class label.  The wrapper ranks features by
greedy forward selection, scoring candidate subsets with the internal
cross-validated accuracy of a small decision tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import TabularDataset, stratified_k_folds

__all__ = [
    "FeatureScore",
    "FeatureRanking",
    "DiscretizationScheme",
    "entropy",
    "discretize_mdl",
    "fit_discretization",
    "information_gain",
    "rank_by_information_gain",
    "wrapper_subset_search",
]

WRAPPER_TREE_PARAMS = {"max_depth": 5, "min_leaf": 5}
WRAPPER_INTERNAL_FOLDS = 5
RANKING_METHODS = ("infogain", "wrapper")


@dataclass(frozen=True)
class FeatureScore:
    feature_index: int
    score: float


@dataclass(frozen=True)
class FeatureRanking:
    """Ordered feature scores plus the selector configuration that made them."""

    method: str
    ordered: tuple[FeatureScore, ...]
    selector_config: dict = field(default_factory=dict)

    def indices(self) -> list[int]:
        return [s.feature_index for s in self.ordered]

    def top(self, k: int) -> list[int]:
        if k < 1 or k > len(self.ordered):
            raise ValueError(f"k must be in [1, {len(self.ordered)}]")
        return self.indices()[:k]

    def to_doc(self) -> dict:
        return {
            "method": self.method,
            "selector_config": dict(self.selector_config),
            "ranking": [
                {"feature_index": s.feature_index, "score": s.score} for s in self.ordered
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, allow_nan=False)

    @classmethod
    def from_doc(cls, doc: dict) -> "FeatureRanking":
        scores = tuple(
            FeatureScore(int(r["feature_index"]), float(r["score"])) for r in doc["ranking"]
        )
        return cls(str(doc["method"]), scores, dict(doc.get("selector_config", {})))

    @classmethod
    def from_json(cls, text: str) -> "FeatureRanking":
        return cls.from_doc(json.loads(text))


@dataclass(frozen=True)
class DiscretizationScheme:
    """Per-feature sorted cut points; feature j gets len(cut_points[j])+1 bins."""

    cut_points: tuple[np.ndarray, ...]

    def __post_init__(self):
        frozen = []
        for j, cuts in enumerate(self.cut_points):
            arr = np.asarray(cuts, dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"feature {j}: cut points must be 1-D")
            if arr.size > 1 and not (np.diff(arr) > 0).all():
                raise ValueError(f"feature {j}: cut points must be strictly increasing")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "cut_points", tuple(frozen))

    @property
    def n_features(self) -> int:
        return len(self.cut_points)


def entropy(counts) -> float:
    """Shannon entropy in bits of a discrete distribution given as counts."""
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise ValueError("counts must be a non-empty 1-D sequence")
    if (c < 0).any():
        raise ValueError("counts must be nonnegative")
    total = c.sum()
    if total == 0:
        raise ValueError("counts must not be all zero")
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum())


def _binary_entropy(c1, n):
    """Vectorized entropy in bits for binary splits given class-1 counts."""
    c1 = np.asarray(c1, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros(np.broadcast(c1, n).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for c in (c1, n - c1):
            p = np.where(n > 0, c / np.maximum(n, 1), 0.0)
            term = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
            out = out + term
    return out


def _best_accepted_cut(v, y, lo, hi):
    """Best MDL-accepted cut position in the sorted slice [lo, hi), or None.

    Candidate cuts sit between adjacent distinct values whose label content
    differs; the winning cut must clear the MDL coding cost of announcing it.
    """
    n = hi - lo
    if n < 2:
        return None
    seg_v = v[lo:hi]
    seg_y = y[lo:hi]
    total_c1 = int(seg_y.sum())
    if total_c1 == 0 or total_c1 == n:
        return None
    change = np.flatnonzero(seg_v[1:] != seg_v[:-1]) + 1
    if change.size == 0:
        return None
    cum = np.concatenate(([0], np.cumsum(seg_y)))
    run_start = np.concatenate(([0], change))
    run_end = np.concatenate((change, [n]))
    run_c1 = cum[run_end] - cum[run_start]
    run_n = run_end - run_start
    pure0 = run_c1 == 0
    pure1 = run_c1 == run_n
    same_pure = (pure0[:-1] & pure0[1:]) | (pure1[:-1] & pure1[1:])
    mids = 0.5 * (seg_v[change - 1] + seg_v[change])
    strictly_between = (seg_v[change - 1] < mids) & (mids < seg_v[change])
    keep = ~same_pure & strictly_between
    if not keep.any():
        return None
    pos = change[keep]
    left_n = pos.astype(np.float64)
    left_c1 = cum[pos].astype(np.float64)
    right_n = n - left_n
    right_c1 = total_c1 - left_c1
    h_all = _binary_entropy(total_c1, n)
    h_left = _binary_entropy(left_c1, left_n)
    h_right = _binary_entropy(right_c1, right_n)
    gains = h_all - (left_n / n) * h_left - (right_n / n) * h_right
    best = int(np.argmax(gains))
    gain = float(gains[best])

    def n_classes(c1, size):
        return int(c1 > 0) + int(c1 < size)

    k = n_classes(total_c1, n)
    k1 = n_classes(left_c1[best], left_n[best])
    k2 = n_classes(right_c1[best], right_n[best])
    delta = np.log2(3.0**k - 2.0) - (k * h_all - k1 * h_left[best] - k2 * h_right[best])
    threshold = (np.log2(n - 1.0) + delta) / n
    if gain <= threshold:
        return None
    return int(pos[best]), float(mids[keep][best])


def discretize_mdl(column, labels) -> np.ndarray:
    """Recursive binary MDL discretization of one numeric column.

    Returns the sorted cut points; an empty array means the column stays as
    a single bin.
    """
    col = np.asarray(column, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    if col.ndim != 1 or col.shape != labs.shape:
        raise ValueError("column and labels must be 1-D and the same length")
    if col.size == 0:
        raise ValueError("column must not be empty")
    if not np.isfinite(col).all():
        raise ValueError("column must be finite")
    order = np.argsort(col, kind="stable")
    v = col[order]
    y = labs[order]
    cuts: list[float] = []
    stack = [(0, col.size)]
    while stack:
        lo, hi = stack.pop()
        found = _best_accepted_cut(v, y, lo, hi)
        if found is None:
            continue
        pos, mid = found
        cuts.append(mid)
        stack.append((lo, lo + pos))
        stack.append((lo + pos, hi))
    return np.array(sorted(cuts), dtype=np.float64)


def fit_discretization(ds: TabularDataset) -> DiscretizationScheme:
    """MDL cut points for every feature column of the dataset."""
    return DiscretizationScheme(
        tuple(discretize_mdl(ds.features[:, j], ds.labels) for j in range(ds.n_features))
    )


def information_gain(ds: TabularDataset, feature_index: int, scheme: DiscretizationScheme) -> FeatureScore:
    """Information gain in bits of one discretized feature against the label."""
    if feature_index < 0 or feature_index >= ds.n_features:
        raise ValueError(f"feature index {feature_index} out of range for {ds.n_features} features")
    if scheme.n_features != ds.n_features:
        raise ValueError(
            f"scheme covers {scheme.n_features} features, dataset has {ds.n_features}"
        )
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    cuts = scheme.cut_points[feature_index]
    bins = np.searchsorted(cuts, ds.features[:, feature_index], side="right")
    n_bins = cuts.size + 1
    sizes = np.bincount(bins, minlength=n_bins).astype(np.float64)
    ones = np.bincount(bins, weights=ds.labels, minlength=n_bins)
    h_label = _binary_entropy(ds.labels.sum(), ds.n_rows)
    occupied = sizes > 0
    h_cond = float(
        ((sizes[occupied] / ds.n_rows) * _binary_entropy(ones[occupied], sizes[occupied])).sum()
    )
    gain = float(h_label - h_cond)
    if gain < 0:
        if gain < -1e-9:
            raise AssertionError(f"negative information gain {gain}")
        gain = 0.0
    return FeatureScore(feature_index, gain)


def rank_by_information_gain(ds: TabularDataset, top_k: int) -> FeatureRanking:
    """Rank features by MDL-discretized information gain, descending.

    Ties break toward the lower feature index, so shorter prefixes of the
    ranking are always prefixes of longer ones.
    """
    if top_k < 1 or top_k > ds.n_features:
        raise ValueError(f"top_k must be in [1, {ds.n_features}]")
    scheme = fit_discretization(ds)
    scores = [information_gain(ds, j, scheme) for j in range(ds.n_features)]
    ordered = sorted(scores, key=lambda s: (-s.score, s.feature_index))
    return FeatureRanking(
        "infogain",
        tuple(ordered[:top_k]),
        {"discretization": "mdl_recursive_binary", "top_k": top_k},
    )


def wrapper_subset_search(ds: TabularDataset, top_k: int, seed: int = 0) -> FeatureRanking:
    """Greedy forward selection scored by internal cross-validated accuracy.

    The evaluator is a depth-limited decision tree; each candidate feature is
    scored by mean accuracy over a fixed internal stratified 5-fold split of
    the given rows only.  The recorded score of a feature is the subset
    accuracy at the step where it was added.  Ties break toward the lower
    feature index.
    """
    from .learners.tree import fit_tree_arrays

    if top_k < 1 or top_k > ds.n_features:
        raise ValueError(f"top_k must be in [1, {ds.n_features}]")
    assignment = stratified_k_folds(ds, WRAPPER_INTERNAL_FOLDS, seed)
    X = ds.features
    y = ds.labels
    splits = []
    for fold in range(assignment.k):
        tr = assignment.train_rows(fold)
        te = assignment.test_rows(fold)
        splits.append((tr, te))

    def subset_accuracy(cols):
        accs = []
        for tr, te in splits:
            model = fit_tree_arrays(X[np.ix_(tr, cols)], y[tr], **WRAPPER_TREE_PARAMS)
            pred = model.predict_batch(X[np.ix_(te, cols)])
            accs.append(float((pred == y[te]).mean()))
        return float(np.mean(accs))

    selected: list[int] = []
    scores: list[float] = []
    remaining = list(range(ds.n_features))
    for _ in range(top_k):
        best_f = -1
        best_acc = -np.inf
        for f in remaining:
            acc = subset_accuracy(selected + [f])
            if acc > best_acc:
                best_acc = acc
                best_f = f
        selected.append(best_f)
        scores.append(best_acc)
        remaining.remove(best_f)
    return FeatureRanking(
        "wrapper",
        tuple(FeatureScore(f, s) for f, s in zip(selected, scores)),
        {
            "evaluator": "decision_tree",
            **WRAPPER_TREE_PARAMS,
            "internal_folds": WRAPPER_INTERNAL_FOLDS,
            "seed": seed,
            "top_k": top_k,
        },
    )


def rank_features(ds: TabularDataset, method: str, top_k: int, seed: int = 0) -> FeatureRanking:
    """Dispatch to a ranking method by its CLI name."""
    if method == "infogain":
        return rank_by_information_gain(ds, top_k)
    if method == "wrapper":
        return wrapper_subset_search(ds, top_k, seed)
    raise ValueError(f"unknown ranking method {method!r}; expected one of {RANKING_METHODS}")


@dataclass(frozen=True)
class RankingSelector:
    """Picklable per-fold feature selector for leakage-free cross-validation."""

    method: str
    top_k: int
    seed: int = 0

    def __call__(self, train_ds: TabularDataset) -> list[int]:
        return rank_features(train_ds, self.method, self.top_k, self.seed).indices()
