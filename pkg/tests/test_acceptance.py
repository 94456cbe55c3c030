"""End-to-end acceptance gate.

Each test covers one shipping criterion and prints a single
"ACCEPTANCE n: PASS/FAIL" line (visible with pytest -s).  The three
criteria that need the retinopathy screening dataset skip loudly when the
file is absent; everything else runs on synthetic or exhaustive inputs.
"""

import itertools
import json
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from drstack.cli import main as cli_main
from drstack.dataset import TabularDataset, stratified_k_folds, take_rows
from drstack.ensemble import StackingSpec, train_stacking
from drstack.evaluation import auc, cross_validate
from drstack.feature_selection import discretize_mdl, fit_discretization, information_gain
from drstack.learners import LearnerSpec, TrainedModel, register_trainer, train

from conftest import (
    locate_screening_file,
    make_blobs,
    mlp_gradcheck_rel_error,
    svm_kkt_max_violation,
    write_csv,
)
from test_evaluation import brute_force_auc, exact_metrics
from test_feature_selection import _exhaustive_gain

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


def _verdict(number: int, description: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {number}: {status} - {description}")
    assert ok, f"criterion {number} failed: {description} {detail}".rstrip()


def _skip(number: int, description: str, reason: str):
    print(f"ACCEPTANCE {number}: SKIP - {description} ({reason})")
    pytest.skip(reason)


def _parse_mean_cell(cell: str) -> float:
    return float(cell.split("(")[0])


def _read_csv_table(path: str) -> dict:
    lines = open(path).read().splitlines()
    header = lines[0].split(",")
    out = {}
    for line in lines[1:]:
        cells = line.split(",")
        out[cells[0]] = dict(zip(header[1:], cells[1:]))
    return out


REFERENCE_ACCURACY = {
    ("Original", "SVM"): 0.697,
    ("Original", "NN"): 0.719,
    ("Original", "RF"): 0.686,
    ("Original", "Stacking"): 0.751,
    ("Wrapper top 5", "SVM"): 0.553,
    ("Wrapper top 5", "NN"): 0.575,
    ("Wrapper top 5", "RF"): 0.581,
    ("Wrapper top 5", "Stacking"): 0.588,
    ("Wrapper top 10", "SVM"): 0.582,
    ("Wrapper top 10", "NN"): 0.618,
    ("Wrapper top 10", "RF"): 0.634,
    ("Wrapper top 10", "Stacking"): 0.645,
    ("InfoGain top 5", "SVM"): 0.685,
    ("InfoGain top 5", "NN"): 0.696,
    ("InfoGain top 5", "RF"): 0.670,
    ("InfoGain top 5", "Stacking"): 0.707,
    ("InfoGain top 10", "SVM"): 0.685,
    ("InfoGain top 10", "NN"): 0.674,
    ("InfoGain top 10", "RF"): 0.670,
    ("InfoGain top 10", "Stacking"): 0.701,
}
CELL_TOLERANCE = 0.08


@pytest.fixture(scope="session")
def screening_reproduction(tmp_path_factory):
    """One full default reproduction on the screening dataset, timed."""
    path = locate_screening_file()
    if path is None:
        return None
    out = str(tmp_path_factory.mktemp("reproduction"))
    started = time.monotonic()
    code = cli_main(["reproduce", "--data", path, "--jobs", "4", "--out", out])
    elapsed = time.monotonic() - started
    assert code == 0
    return {"out": out, "elapsed": elapsed}


def test_reproduction_grid(screening_reproduction):
    desc = "default reproduction under 10 minutes, accuracy grid within 0.08"
    if screening_reproduction is None:
        _skip(1, desc, "screening dataset not available; set MESSIDOR_FEATURES")
    grid = _read_csv_table(os.path.join(screening_reproduction["out"], "accuracy_by_dataset.csv"))
    misses = []
    for (dataset, model), want in REFERENCE_ACCURACY.items():
        got = _parse_mean_cell(grid[dataset][model])
        if abs(got - want) > CELL_TOLERANCE:
            misses.append(f"{dataset}/{model}: {got:.3f} vs {want:.3f}")
    elapsed = screening_reproduction["elapsed"]
    ok = elapsed < 600.0 and not misses
    _verdict(1, desc, ok, f"elapsed={elapsed:.0f}s misses={misses}")


def test_ordering_claims(screening_reproduction):
    desc = "stack at least matches singles; InfoGain-5 beats Wrapper-5 by 0.05; stack AUC >= 0.75"
    if screening_reproduction is None:
        _skip(2, desc, "screening dataset not available; set MESSIDOR_FEATURES")
    out = screening_reproduction["out"]
    grid = _read_csv_table(os.path.join(out, "accuracy_by_dataset.csv"))
    stack_acc = _parse_mean_cell(grid["Original"]["Stacking"])
    singles = {m: _parse_mean_cell(grid["Original"][m]) for m in ("SVM", "NN", "RF")}
    a_ok = all(stack_acc >= v - 0.01 for v in singles.values())

    reduced = _read_csv_table(os.path.join(out, "stack_reduced.csv"))
    gap = _parse_mean_cell(reduced["InfoGain top 5"]["Accuracy"]) - _parse_mean_cell(
        reduced["Wrapper top 5"]["Accuracy"]
    )
    b_ok = gap >= 0.05

    comparison = _read_csv_table(os.path.join(out, "best_vs_stack.csv"))
    stack_auc = float(comparison["Stacking"]["AUC"])
    c_ok = stack_auc >= 0.75

    _verdict(
        2, desc, a_ok and b_ok and c_ok,
        f"stack={stack_acc:.3f} singles={singles} gap={gap:.3f} auc={stack_auc:.3f}",
    )


def test_metric_engine_exactness():
    desc = "metrics match exact fractions on 1000 matrices; AUC matches brute force on 200 cases"
    from drstack.evaluation import ConfusionMatrix, accuracy, f_measure, precision, recall

    rng = np.random.default_rng(20240501)
    metrics_ok = True
    for _ in range(1000):
        tp, fp, tn, fn = (int(v) for v in rng.integers(0, 60, size=4))
        cm = ConfusionMatrix(tp, fp, tn, fn)
        want = exact_metrics(tp, fp, tn, fn)
        p, r = want["precision"], want["recall"]
        want["f_measure"] = (
            None if p is None or r is None or p + r == 0 else 2 * p * r / (p + r)
        )
        for name, fn_ in (
            ("accuracy", accuracy), ("precision", precision),
            ("recall", recall), ("f_measure", f_measure),
        ):
            got = fn_(cm)
            if want[name] is None:
                metrics_ok &= got is None
            else:
                metrics_ok &= got is not None and abs(got - float(want[name])) < 1e-12

    auc_ok = True
    for _ in range(200):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[rng.integers(0, n)] = 1 - labels[0]
        # half the cases use a coarse grid so ties are common
        if rng.integers(0, 2):
            scores = rng.integers(0, 6, size=n) / 5.0
        else:
            scores = rng.random(n)
        want = brute_force_auc(scores, labels)
        auc_ok &= abs(auc(scores, labels) - float(want)) < 1e-12

    _verdict(3, desc, metrics_ok and auc_ok)


def _all_binary_datasets(n_rows: int, n_features: int):
    columns = list(itertools.product((0.0, 1.0), repeat=n_rows))
    labels = list(itertools.product((0, 1), repeat=n_rows))
    for feats in itertools.product(columns, repeat=n_features):
        X = np.array(feats, dtype=float).T
        for y in labels:
            yield X, np.array(y)


def test_feature_selection_oracle():
    desc = "information gain equals exhaustive recomputation; MDL accepts/rejects the known cuts"
    gain_ok = True

    # complete enumeration of every binary dataset small enough to list
    for n_rows, n_features in ((1, 1), (2, 1), (3, 1), (2, 2), (3, 2)):
        for X, y in _all_binary_datasets(n_rows, n_features):
            ds = TabularDataset.from_arrays(X, y)
            scheme = fit_discretization(ds)
            for j in range(n_features):
                got = information_gain(ds, j, scheme).score
                want = _exhaustive_gain(X[:, j], y, scheme.cut_points[j])
                gain_ok &= abs(got - want) < 1e-9

    # random coverage across the full size range
    rng = np.random.default_rng(77)
    for _ in range(500):
        n = int(rng.integers(1, 13))
        d = int(rng.integers(1, 5))
        X = rng.integers(0, 2, size=(n, d)).astype(float)
        y = rng.integers(0, 2, size=n)
        ds = TabularDataset.from_arrays(X, y)
        scheme = fit_discretization(ds)
        for j in range(d):
            got = information_gain(ds, j, scheme).score
            want = _exhaustive_gain(X[:, j], y, scheme.cut_points[j])
            gain_ok &= abs(got - want) < 1e-9

    accepted = discretize_mdl([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1])
    rejected = discretize_mdl([1.0, 2.0, 3.0, 4.0], [0, 1, 0, 1])
    mdl_ok = accepted.tolist() == [2.5] and rejected.size == 0

    _verdict(4, desc, gain_ok and mdl_ok)


def test_learner_numerics():
    desc = "gradients match finite differences; KKT holds at convergence; two-point analytic case"
    grad_worst = max(mlp_gradcheck_rel_error(seed) for seed in range(100))
    grad_ok = grad_worst < 1e-4

    kkt_ok = True
    rng = np.random.default_rng(5)
    for i in range(20):
        n0, n1 = (int(v) for v in rng.integers(10, 25, size=2))
        d = int(rng.integers(2, 5))
        X, y = make_blobs(n0, n1, d=d, seed=int(rng.integers(0, 10_000)), sep=3.5)
        ds = TabularDataset.from_arrays(X, y)
        model = train(ds, LearnerSpec("svm", seed=i))
        kkt_ok &= model.converged and svm_kkt_max_violation(model, ds) < 1e-3

    two_point = TabularDataset.from_arrays(np.array([[-1.0], [1.0]]), np.array([0, 1]))
    model = train(two_point, LearnerSpec("svm", {"kernel": "linear", "C": 1e6}))
    margins = model.decision_function(two_point.features)
    boundary = model.decision_function([[0.0]])[0]
    analytic_ok = (
        abs(margins[0] + 1.0) < 1e-6
        and abs(margins[1] - 1.0) < 1e-6
        and abs(boundary) < 1e-6
    )

    _verdict(
        5, desc, grad_ok and kkt_ok and analytic_ok,
        f"grad_worst={grad_worst:.2e}",
    )


_SELECTOR_LOG = []


def _id_selector(train_ds):
    _SELECTOR_LOG.append(train_ds.features[:, 0].astype(np.int64))
    return list(range(train_ds.n_features))


def test_protocol_hygiene():
    desc = "fold-disjoint training everywhere, stacking internals included; stratification balanced"
    rng = np.random.default_rng(11)

    # outer folds: a unique id in column 0 reveals exactly which rows each
    # training split contained
    n, k, seed = 57, 5, 13
    X = np.column_stack([np.arange(n, dtype=float), rng.normal(size=(n, 2))])
    y = (rng.random(n) < 0.45).astype(int)
    ds = TabularDataset.from_arrays(X, y)
    _SELECTOR_LOG.clear()
    cross_validate(ds, LearnerSpec("tree"), k=k, seed=seed, selector=_id_selector)
    assignment = stratified_k_folds(ds, k, seed)
    outer_ok = len(_SELECTOR_LOG) == k
    for fold in range(k):
        want = assignment.train_rows(fold)
        outer_ok &= np.array_equal(_SELECTOR_LOG[fold], want)
        outer_ok &= not set(_SELECTOR_LOG[fold]) & set(assignment.test_rows(fold).tolist())

    # stacking internals: every internal fit must train strictly inside the
    # outer training split and never score a row it saw
    stack_ok = True
    spec = StackingSpec(
        base_specs=(LearnerSpec("logistic"), LearnerSpec("tree")),
        meta_spec=LearnerSpec("logistic"),
        internal_folds=3,
        seed=2,
    )
    for fold in range(k):
        outer_train = assignment.train_rows(fold)
        outer_test_ids = set(assignment.test_rows(fold).tolist())
        inner_ds = take_rows(ds, outer_train)
        trace = {}
        train_stacking(inner_ds, spec, trace=trace)
        for fit in trace["fits"]:
            train_ids = set(inner_ds.features[fit["train_rows"], 0].astype(int).tolist())
            scored_ids = set(inner_ds.features[fit["scored_rows"], 0].astype(int).tolist())
            stack_ok &= not train_ids & scored_ids
            stack_ok &= not train_ids & outer_test_ids
            stack_ok &= not scored_ids & outer_test_ids

    strat_ok = True
    for _ in range(100):
        k2 = int(rng.integers(2, 11))
        n0 = int(rng.integers(k2, 60))
        n1 = int(rng.integers(k2, 60))
        labels = np.array([0] * n0 + [1] * n1)
        rng.shuffle(labels)
        ds2 = TabularDataset.from_arrays(rng.normal(size=(n0 + n1, 2)), labels)
        fold_of_row = stratified_k_folds(ds2, k2, int(rng.integers(0, 1 << 31))).fold_of_row
        for cls in (0, 1):
            counts = np.bincount(fold_of_row[ds2.labels == cls], minlength=k2)
            strat_ok &= counts.max() - counts.min() <= 1

    _verdict(6, desc, outer_ok and stack_ok and strat_ok)


SPEED_OVERRIDES = [
    "--set", "forest.tree_count=10", "--set", "mlp.epochs=20",
    "--set", "svm.max_passes=50", "--set", "stack.internal_folds=2",
]


def test_determinism_across_thread_counts(tmp_path):
    desc = "same-seed reproductions are byte-identical with different thread counts"
    X, y = make_blobs(60, 60, d=8, seed=31, sep=1.0)
    data = str(write_csv(tmp_path / "d.csv", X, y))
    outs = []
    for jobs in ("1", "4"):
        out = str(tmp_path / f"run_jobs{jobs}")
        code = cli_main(["reproduce", "--data", data, "--folds", "3", "--seed", "42",
                         "--jobs", jobs, "--out", out, *SPEED_OVERRIDES])
        assert code == 0
        outs.append(out)

    names = sorted(os.listdir(outs[0]))
    same_listing = names == sorted(os.listdir(outs[1]))
    diffs = []
    for name in names:
        a = open(os.path.join(outs[0], name), "rb").read()
        b = open(os.path.join(outs[1], name), "rb").read()
        if a != b:
            diffs.append(name)
    _verdict(7, desc, same_listing and not diffs, f"differing files: {diffs}")


class _ConstantModel(TrainedModel):
    kind = "always_majority"

    def __init__(self, label, n_features):
        self.label = int(label)
        self.n_features = int(n_features)
        self.params = {}
        self.seed = 0

    def _proba(self, X):
        return np.full(X.shape[0], float(self.label))

    def fitted_state(self):
        return {"label": self.label}


def _train_always_majority(ds, spec):
    counts = np.bincount(ds.labels, minlength=2)
    return _ConstantModel(int(counts[1] > counts[0]), ds.n_features)


register_trainer("always_majority", _train_always_majority)


def test_baseline_sanity():
    desc = "always-majority predictor scores 0.531 +/- 0.01 on the screening dataset"
    path = locate_screening_file()
    if path is None:
        _skip(8, desc, "screening dataset not available; set MESSIDOR_FEATURES")
    from drstack.dataset import load_table

    ds = load_table(path)
    result = cross_validate(ds, LearnerSpec("always_majority"), k=10, seed=42)
    mean_acc = result.mean("accuracy")
    _verdict(8, desc, abs(mean_acc - 0.531) <= 0.01, f"mean={mean_acc:.4f}")
