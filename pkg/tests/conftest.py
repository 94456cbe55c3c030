import os

import numpy as np
import pytest

from drstack.dataset import TabularDataset, load_table

SCREENING_ENV = "MESSIDOR_FEATURES"
SCREENING_CANDIDATES = (
    "data/messidor_features.arff",
    "data/messidor_features.csv",
    "data/messidor_features.data",
)


def make_blobs(n0, n1, d=4, seed=0, sep=2.0):
    """Two gaussian blobs separated along the first axis."""
    rng = np.random.default_rng(seed)
    X0 = rng.normal(size=(n0, d))
    X1 = rng.normal(size=(n1, d))
    X1[:, 0] += sep
    X = np.vstack([X0, X1])
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    perm = rng.permutation(n0 + n1)
    return X[perm], y[perm]


def blobs_ds(n0, n1, d=4, seed=0, sep=2.0) -> TabularDataset:
    X, y = make_blobs(n0, n1, d, seed, sep)
    return TabularDataset.from_arrays(X, y, source="blobs")


@pytest.fixture(scope="session")
def surrogate_ds() -> TabularDataset:
    """1151 rows, 19 features, 540/611 split; moderate signal in a few columns."""
    rng = np.random.default_rng(2024)
    n, n1 = 1151, 611
    X = rng.normal(size=(n, 19))
    y = np.zeros(n, dtype=int)
    y[:n1] = 1
    rng.shuffle(y)
    X[:, 0] += 0.9 * y
    X[:, 3] -= 0.7 * y
    X[:, 7] += 0.5 * y
    return TabularDataset.from_arrays(X, y, source="surrogate")


def locate_screening_file():
    path = os.environ.get(SCREENING_ENV)
    if path and os.path.exists(path):
        return path
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    for rel in SCREENING_CANDIDATES:
        cand = os.path.join(here, rel)
        if os.path.exists(cand):
            return cand
    return None


@pytest.fixture(scope="session")
def screening_path():
    path = locate_screening_file()
    if path is None:
        pytest.skip(
            f"retinopathy screening dataset not found; set {SCREENING_ENV} or place it "
            f"under data/ (see README)"
        )
    return path


@pytest.fixture(scope="session")
def screening_ds(screening_path):
    return load_table(screening_path)


def write_csv(path, X, y, header=True):
    lines = []
    if header:
        lines.append(",".join(f"f{j}" for j in range(X.shape[1])) + ",class")
    for row, label in zip(X, y):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def mlp_gradcheck_rel_error(seed):
    """Analytic vs central-difference gradients on a small random net."""
    from drstack.learners.mlp import _init_params, _loss_and_grads

    rng = np.random.default_rng(seed)
    n_in = int(rng.integers(1, 3))
    n_hidden = int(rng.integers(1, 3))
    n_rows = int(rng.integers(4, 9))
    X = rng.normal(size=(n_rows, n_in))
    y = rng.integers(0, 2, size=n_rows).astype(np.float64)
    params = _init_params(n_in, n_hidden, rng)
    _, grads = _loss_and_grads(params, X, y)

    eps = 1e-6
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g).reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            up, _ = _loss_and_grads(params, X, y)
            flat_p[i] = orig - eps
            down, _ = _loss_and_grads(params, X, y)
            flat_p[i] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(numeric) + abs(flat_g[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_g[i]) / denom)
    return worst


def svm_kkt_max_violation(model, ds):
    """Largest KKT slack over the training points of a fitted SVM."""
    C = float(model.params["C"])
    margins = model.decision_function(ds.features)
    s = ds.labels * 2.0 - 1.0
    fy = s * margins

    X = (ds.features - model.mu) / model.sigma
    alpha = np.zeros(ds.n_rows)
    for vec, coef in zip(model.support, model.coef):
        match = np.flatnonzero((X == vec).all(axis=1))
        alpha[match[0]] = abs(coef)

    worst = 0.0
    for i in range(ds.n_rows):
        if alpha[i] <= 1e-8:
            worst = max(worst, 1.0 - fy[i])
        elif alpha[i] >= C - 1e-8:
            worst = max(worst, fy[i] - 1.0)
        else:
            worst = max(worst, abs(fy[i] - 1.0))
    return worst
