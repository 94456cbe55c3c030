"""Metrics, AUC, repeated stratified cross-validation, and report tables.

Class 1 is the positive class throughout.  Metrics with a zero denominator
are undefined: they come back as None, are excluded from fold averages, and
the number of undefined folds is reported alongside.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import learners
from .dataset import TabularDataset, project_features, stratified_k_folds, take_rows
from .ensemble import StackingSpec, train_stacking
from .learners import LearnerSpec

__all__ = [
    "ConfusionMatrix",
    "MetricsReport",
    "CvResult",
    "Table",
    "ReportTables",
    "confusion_matrix",
    "accuracy",
    "precision",
    "recall",
    "f_measure",
    "auc",
    "fold_report",
    "cross_validate",
    "summarize_tables",
    "METRIC_NAMES",
]

METRIC_NAMES = ("accuracy", "precision", "recall", "f_measure", "auc")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with class 1 positive: tp, fp, tn, fn."""

    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_matrix(predictions, labels) -> ConfusionMatrix:
    p = np.asarray(predictions)
    t = np.asarray(labels)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("predictions and labels must be 1-D and the same length")
    for arr, name in ((p, "predictions"), (t, "labels")):
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must contain only 0 and 1")
    return ConfusionMatrix(
        tp=int(((t == 1) & (p == 1)).sum()),
        fp=int(((t == 0) & (p == 1)).sum()),
        tn=int(((t == 0) & (p == 0)).sum()),
        fn=int(((t == 1) & (p == 0)).sum()),
    )


def accuracy(cm: ConfusionMatrix) -> float | None:
    if cm.total == 0:
        return None
    return (cm.tp + cm.tn) / cm.total


def precision(cm: ConfusionMatrix) -> float | None:
    denom = cm.tp + cm.fp
    if denom == 0:
        return None
    return cm.tp / denom


def recall(cm: ConfusionMatrix) -> float | None:
    denom = cm.tp + cm.fn
    if denom == 0:
        return None
    return cm.tp / denom


def f_measure(cm: ConfusionMatrix) -> float | None:
    p = precision(cm)
    r = recall(cm)
    if p is None or r is None or p + r == 0:
        return None
    return 2.0 * p * r / (p + r)


def auc(scores, labels) -> float:
    """Probability a random positive scores above a random negative.

    Tied scores count one half.  Raises when only one class is present.
    """
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[y == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricsReport:
    """Per-fold evaluation: confusion counts and the derived metrics."""

    cm: ConfusionMatrix
    accuracy: float | None
    precision: float | None
    recall: float | None
    f_measure: float | None
    auc: float | None

    def value(self, name: str) -> float | None:
        if name not in METRIC_NAMES:
            raise ValueError(f"unknown metric {name!r}")
        return getattr(self, name)


def fold_report(labels, predictions, scores) -> MetricsReport:
    cm = confusion_matrix(predictions, labels)
    y = np.asarray(labels)
    both = 0 < int((y == 1).sum()) < y.size
    return MetricsReport(
        cm=cm,
        accuracy=accuracy(cm),
        precision=precision(cm),
        recall=recall(cm),
        f_measure=f_measure(cm),
        auc=auc(scores, labels) if both else None,
    )


@dataclass(frozen=True)
class CvResult:
    """Fold-level reports in (repeat, fold) order plus the run protocol."""

    fold_reports: tuple[MetricsReport, ...]
    k: int
    repeats: int
    seed: int
    protocol: dict = field(default_factory=dict)

    def values(self, name: str) -> list[float]:
        """Defined values of one metric, sorted ascending."""
        vals = [r.value(name) for r in self.fold_reports]
        return sorted(v for v in vals if v is not None)

    def undefined_count(self, name: str) -> int:
        return sum(1 for r in self.fold_reports if r.value(name) is None)

    def mean(self, name: str) -> float | None:
        vals = self.values(name)
        if not vals:
            return None
        return float(np.mean(vals))

    def std(self, name: str) -> float | None:
        """Sample standard deviation over defined fold values."""
        vals = self.values(name)
        if not vals:
            return None
        if len(vals) < 2:
            return 0.0
        return float(np.std(vals, ddof=1))


def describe_spec(spec) -> dict:
    if isinstance(spec, StackingSpec):
        return {
            "kind": "stack",
            "bases": [describe_spec(b) for b in spec.base_specs],
            "meta": describe_spec(spec.meta_spec),
            "internal_folds": spec.internal_folds,
            "seed": spec.seed,
        }
    return {"kind": spec.kind, "params": dict(spec.params), "seed": spec.seed}


def _train_any(ds: TabularDataset, spec):
    if isinstance(spec, StackingSpec):
        return train_stacking(ds, spec)
    return learners.train(ds, spec)


def _run_fold(task) -> MetricsReport:
    ds, spec, fold_of_row, fold, selector = task
    train_rows = np.flatnonzero(fold_of_row != fold)
    test_rows = np.flatnonzero(fold_of_row == fold)
    train_ds = take_rows(ds, train_rows)
    test_ds = take_rows(ds, test_rows)
    if selector is not None:
        columns = list(selector(train_ds))
        train_ds = project_features(train_ds, columns)
        test_ds = project_features(test_ds, columns)
    model = _train_any(train_ds, spec)
    probs = model._proba(test_ds.features)
    preds = (probs >= 0.5).astype(np.int64)
    return fold_report(test_ds.labels, preds, probs)


def cross_validate(
    ds: TabularDataset,
    spec,
    k: int = 10,
    repeats: int = 1,
    seed: int = 42,
    jobs: int = 1,
    selector=None,
) -> CvResult:
    """Repeated stratified k-fold evaluation of one model spec.

    Repeat r derives its fold seed as seed XOR r, so single repeats can be
    reproduced in isolation.  selector, when given, is called on each
    training split and must return feature indices to keep; the same columns
    are then applied to the test split.  jobs > 1 evaluates folds in worker
    processes; results are gathered in task order, so the outcome does not
    depend on scheduling.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    tasks = []
    for r in range(repeats):
        assignment = stratified_k_folds(ds, k, seed ^ r)
        for fold in range(k):
            tasks.append((ds, spec, assignment.fold_of_row, fold, selector))
    if jobs == 1:
        reports = [_run_fold(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_fold, tasks))
    protocol = {
        "dataset": {
            "source": ds.provenance.source,
            "n_rows": ds.n_rows,
            "class_counts": {
                "0": int((ds.labels == 0).sum()),
                "1": int((ds.labels == 1).sum()),
            },
        },
        "model": describe_spec(spec),
        "selector": repr(selector) if selector is not None else None,
    }
    return CvResult(tuple(reports), k, repeats, seed, protocol)


def _fmt(value: float | None, digits: int = 3) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def _mean_std_cell(result: CvResult, metric: str) -> str:
    mean = result.mean(metric)
    std = result.std(metric)
    if mean is None:
        return "n/a"
    return f"{mean:.3f}({std:.3f})"


@dataclass(frozen=True)
class Table:
    title: str
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def to_markdown(self) -> str:
        lines = [f"### {self.title}", ""]
        lines.append("| " + " | ".join(self.header) + " |")
        lines.append("|" + "|".join(" --- " for _ in self.header) + "|")
        for row in self.rows:
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        out = [",".join(self.header)]
        out.extend(",".join(row) for row in self.rows)
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class ReportTables:
    accuracy_table: Table
    comparison_table: Table
    reduced_table: Table
    best_single: str

    def to_markdown(self) -> str:
        return "\n".join(
            t.to_markdown()
            for t in (self.accuracy_table, self.comparison_table, self.reduced_table)
        )


DATASET_ORDER = ("original", "wrapper_top5", "wrapper_top10", "infogain_top5", "infogain_top10")
DATASET_TITLES = {
    "original": "Original",
    "wrapper_top5": "Wrapper top 5",
    "wrapper_top10": "Wrapper top 10",
    "infogain_top5": "InfoGain top 5",
    "infogain_top10": "InfoGain top 10",
}
MODEL_ORDER = ("svm", "nn", "rf", "stack")
MODEL_TITLES = {"svm": "SVM", "nn": "NN", "rf": "RF", "stack": "Stacking"}
QUAD_METRICS = ("accuracy", "recall", "precision", "auc")
QUAD_TITLES = {"accuracy": "Accuracy", "recall": "Recall", "precision": "Precision", "auc": "AUC"}


def summarize_tables(
    results: dict,
    dataset_order=DATASET_ORDER,
    model_order=MODEL_ORDER,
) -> ReportTables:
    """Build the three report tables from (dataset, model) -> CvResult.

    Table one is accuracy mean(std) for every model on every dataset; table
    two compares the best single model against the stack on the full
    dataset; table three shows the stack across the reduced datasets.
    """
    for d in dataset_order:
        for m in model_order:
            if (d, m) not in results:
                raise ValueError(f"missing result for dataset {d!r}, model {m!r}")

    acc_rows = []
    for d in dataset_order:
        row = [DATASET_TITLES.get(d, d)]
        row.extend(_mean_std_cell(results[(d, m)], "accuracy") for m in model_order)
        acc_rows.append(tuple(row))
    accuracy_table = Table(
        "Accuracy by dataset and model, mean(std) over folds",
        ("Dataset", *(MODEL_TITLES.get(m, m) for m in model_order)),
        tuple(acc_rows),
    )

    full = dataset_order[0]
    singles = [m for m in model_order if m != "stack"]
    best_single = max(
        singles,
        key=lambda m: (
            results[(full, m)].mean("accuracy") or -1.0,
            -singles.index(m),
        ),
    )
    comp_rows = []
    for label, m in ((f"Best single ({MODEL_TITLES.get(best_single, best_single)})", best_single), ("Stacking", "stack")):
        res = results[(full, m)]
        comp_rows.append((label, *(_fmt(res.mean(metric)) for metric in QUAD_METRICS)))
    comparison_table = Table(
        f"Best single model vs stacking on the {DATASET_TITLES.get(full, full)} dataset",
        ("Model", *(QUAD_TITLES[m] for m in QUAD_METRICS)),
        tuple(comp_rows),
    )

    reduced_rows = []
    for d in dataset_order[1:]:
        res = results[(d, "stack")]
        reduced_rows.append(
            (DATASET_TITLES.get(d, d), *(_fmt(res.mean(metric)) for metric in QUAD_METRICS))
        )
    reduced_table = Table(
        "Stacking on the reduced datasets",
        ("Dataset", *(QUAD_TITLES[m] for m in QUAD_METRICS)),
        tuple(reduced_rows),
    )
    return ReportTables(accuracy_table, comparison_table, reduced_table, best_single)
