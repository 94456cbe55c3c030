"""Kernel SVM trained by sequential minimal optimization.

Inputs are standardized and labels mapped to -1/+1.  The dual is solved by
SMO with an error cache; probabilities come from a sigmoid fitted on seeded
internal out-of-fold margins.  The RBF kernel with gamma = 1/n_features is
the default.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from numba import njit

from ..dataset import _stratified_fold_ids
from .base import (
    LearnerSpec,
    TrainedModel,
    fit_standardizer,
    register_model_class,
)
from .tree import _mix64

DEFAULTS = {
    "C": 1.0,
    "gamma": None,
    "kernel": "rbf",
    "tol": 1e-3,
    "max_passes": 200,
    "calibration_folds": 3,
}

_STEP_EPS = 1e-5


@njit(cache=True)
def _take_step(K, s, alpha, err, b, i1, i2, C):
    if i1 == i2:
        return 0
    a1 = alpha[i1]
    a2 = alpha[i2]
    y1 = s[i1]
    y2 = s[i2]
    e1 = err[i1]
    e2 = err[i2]
    sp = y1 * y2
    if sp > 0.0:
        lo = max(0.0, a1 + a2 - C)
        hi = min(C, a1 + a2)
    else:
        lo = max(0.0, a2 - a1)
        hi = min(C, C + a2 - a1)
    if lo >= hi:
        return 0
    k11 = K[i1, i1]
    k12 = K[i1, i2]
    k22 = K[i2, i2]
    eta = k11 + k22 - 2.0 * k12
    if eta > 0.0:
        a2new = a2 + y2 * (e1 - e2) / eta
        if a2new < lo:
            a2new = lo
        elif a2new > hi:
            a2new = hi
    else:
        f1 = y1 * (e1 - b[0]) - a1 * k11 - sp * a2 * k12
        f2 = y2 * (e2 - b[0]) - sp * a1 * k12 - a2 * k22
        l1 = a1 + sp * (a2 - lo)
        h1 = a1 + sp * (a2 - hi)
        obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + sp * lo * l1 * k12
        obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + sp * hi * h1 * k12
        if obj_lo < obj_hi - 1e-12:
            a2new = lo
        elif obj_lo > obj_hi + 1e-12:
            a2new = hi
        else:
            a2new = a2
    if a2new < 1e-8:
        a2new = 0.0
    elif a2new > C - 1e-8:
        a2new = C
    if abs(a2new - a2) < _STEP_EPS * (a2new + a2 + _STEP_EPS):
        return 0
    a1new = a1 + sp * (a2 - a2new)
    if a1new < 0.0:
        a2new += sp * a1new
        a1new = 0.0
    elif a1new > C:
        a2new += sp * (a1new - C)
        a1new = C
    d1 = y1 * (a1new - a1)
    d2 = y2 * (a2new - a2)
    b1 = b[0] - e1 - d1 * k11 - d2 * k12
    b2 = b[0] - e2 - d1 * k12 - d2 * k22
    if a1new > 0.0 and a1new < C:
        bnew = b1
    elif a2new > 0.0 and a2new < C:
        bnew = b2
    else:
        bnew = 0.5 * (b1 + b2)
    db = bnew - b[0]
    b[0] = bnew
    alpha[i1] = a1new
    alpha[i2] = a2new
    for j in range(K.shape[0]):
        err[j] += d1 * K[i1, j] + d2 * K[i2, j] + db
    return 1


@njit(cache=True)
def _examine(K, s, alpha, err, b, i2, C, tol, rstate):
    y2 = s[i2]
    a2 = alpha[i2]
    r2 = err[i2] * y2
    if not ((r2 < -tol and a2 < C) or (r2 > tol and a2 > 0.0)):
        return 0
    n = K.shape[0]
    best = -1.0
    i1 = -1
    for j in range(n):
        if alpha[j] > 0.0 and alpha[j] < C:
            gap = abs(err[j] - err[i2])
            if gap > best:
                best = gap
                i1 = j
    if i1 >= 0:
        if _take_step(K, s, alpha, err, b, i1, i2, C):
            return 1
    rstate[0], z = _mix64(rstate[0])
    start = np.int64(z % np.uint64(n))
    for off in range(n):
        j = (start + off) % n
        if alpha[j] > 0.0 and alpha[j] < C:
            if _take_step(K, s, alpha, err, b, j, i2, C):
                return 1
    rstate[0], z = _mix64(rstate[0])
    start = np.int64(z % np.uint64(n))
    for off in range(n):
        j = (start + off) % n
        if _take_step(K, s, alpha, err, b, j, i2, C):
            return 1
    return 0


@njit(cache=True)
def _smo(K, s, C, tol, max_passes, seed):
    """Solve the dual on a precomputed kernel matrix.

    Returns (alpha, b, converged, sweeps).  converged is True when a full
    sweep finds no KKT violation beyond tol.
    """
    n = K.shape[0]
    alpha = np.zeros(n, np.float64)
    err = -s.copy()
    b = np.zeros(1, np.float64)
    rstate = np.empty(1, np.uint64)
    rstate[0] = seed
    examine_all = True
    converged = False
    sweeps = 0
    while sweeps < max_passes:
        changed = 0
        if examine_all:
            for i in range(n):
                changed += _examine(K, s, alpha, err, b, i, C, tol, rstate)
        else:
            for i in range(n):
                if alpha[i] > 0.0 and alpha[i] < C:
                    changed += _examine(K, s, alpha, err, b, i, C, tol, rstate)
        sweeps += 1
        if examine_all:
            if changed == 0:
                converged = True
                break
            examine_all = False
        elif changed == 0:
            examine_all = True
    return alpha, b[0], converged, sweeps


def _kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def _fit_platt(margins: np.ndarray, labels: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit sigmoid parameters (A, B) so that P(y=1) = 1/(1+exp(A*f+B)).

    Newton iterations with backtracking on prior-smoothed targets; robust to
    separable margin sets.
    """
    f = np.asarray(margins, dtype=np.float64)
    y = np.asarray(labels)
    prior1 = float((y == 1).sum())
    prior0 = float((y == 0).sum())
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(y == 1, hi, lo)
    min_step = 1e-10
    ridge = 1e-12

    def objective(a, b):
        fab = a * f + b
        pos = fab >= 0
        return float(
            np.where(
                pos,
                t * fab + np.log1p(np.exp(-np.abs(fab))),
                (t - 1.0) * fab + np.log1p(np.exp(-np.abs(fab))),
            ).sum()
        )

    a = 0.0
    b = math.log((prior0 + 1.0) / (prior1 + 1.0))
    fval = objective(a, b)
    for _ in range(max_iter):
        fab = a * f + b
        ef = np.exp(-np.abs(fab))
        p = np.where(fab >= 0, ef / (1.0 + ef), 1.0 / (1.0 + ef))
        q = 1.0 - p
        d2 = p * q
        h11 = float((f * f * d2).sum()) + ridge
        h22 = float(d2.sum()) + ridge
        h21 = float((f * d2).sum())
        d1 = t - p
        g1 = float((f * d1).sum())
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= min_step:
            na = a + step * da
            nb = b + step * db
            nf = objective(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step *= 0.5
        else:
            break
    return a, b


@register_model_class
class SvmModel(TrainedModel):
    kind = "svm"

    def __init__(
        self, mu, sigma, support, coef, intercept, platt_a, platt_b,
        n_features, params, seed, converged=True, constant_label=None,
        calibration="out_of_fold",
    ):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        self.support = np.asarray(support, dtype=np.float64).reshape(-1, int(n_features))
        self.coef = np.asarray(coef, dtype=np.float64)
        self.intercept = float(intercept)
        self.platt_a = float(platt_a)
        self.platt_b = float(platt_b)
        self.n_features = int(n_features)
        self.params = dict(params)
        self.seed = int(seed)
        self.converged = bool(converged)
        self.constant_label = None if constant_label is None else int(constant_label)
        self.calibration = str(calibration)

    def decision_function(self, X) -> np.ndarray:
        """Raw margins for a batch of unstandardized instances."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        Z = (X - self.mu) / self.sigma
        kernel = self.params["kernel"]
        gamma = self.params["gamma"]
        if self.support.shape[0] == 0:
            return np.full(Z.shape[0], self.intercept)
        return self.coef @ _kernel_matrix(self.support, Z, kernel, gamma) + self.intercept

    def _proba(self, X: np.ndarray) -> np.ndarray:
        if self.constant_label is not None:
            return np.full(X.shape[0], float(self.constant_label))
        margins = self.decision_function(X)
        z = self.platt_a * margins + self.platt_b
        return 1.0 / (1.0 + np.exp(np.clip(z, -500.0, 500.0)))

    def fitted_state(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "support": self.support,
            "coef": self.coef,
            "intercept": self.intercept,
            "platt_a": self.platt_a,
            "platt_b": self.platt_b,
            "converged": self.converged,
            "constant_label": self.constant_label,
            "calibration": self.calibration,
        }

    @classmethod
    def _from_state(cls, doc: dict) -> "SvmModel":
        s = doc["state"]
        return cls(
            s["mu"], s["sigma"], s["support"], s["coef"], s["intercept"],
            s["platt_a"], s["platt_b"], doc["n_features"], doc["params"],
            doc["seed"], s["converged"], s["constant_label"], s["calibration"],
        )


def train_svm(ds, spec: LearnerSpec) -> SvmModel:
    params = spec.resolve(DEFAULTS)
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    C = float(params["C"])
    if C <= 0:
        raise ValueError("C must be positive")
    kernel = params["kernel"]
    if kernel not in ("rbf", "linear"):
        raise ValueError(f"unknown kernel {kernel!r}; expected 'rbf' or 'linear'")
    tol = float(params["tol"])
    max_passes = int(params["max_passes"])
    if tol <= 0 or max_passes < 1:
        raise ValueError("tol must be positive and max_passes at least 1")
    cal_folds = int(params["calibration_folds"])
    if cal_folds < 2:
        raise ValueError("calibration_folds must be at least 2")
    gamma = params["gamma"]
    gamma = 1.0 / ds.n_features if gamma is None else float(gamma)
    stored = dict(params)
    stored["gamma"] = gamma

    counts = np.bincount(ds.labels, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        label = int(counts[1] > 0)
        return SvmModel(
            np.zeros(ds.n_features), np.ones(ds.n_features),
            np.empty((0, ds.n_features)), np.empty(0), 0.0, 0.0, 0.0,
            ds.n_features, stored, spec.seed, True, label, "constant",
        )

    mu, sigma = fit_standardizer(ds.features)
    X = (ds.features - mu) / sigma
    s = (ds.labels * 2 - 1).astype(np.float64)
    rng = np.random.default_rng(spec.seed)
    K = _kernel_matrix(X, X, kernel, gamma)
    n = ds.n_rows
    conv_flags = []

    if int(counts.min()) >= cal_folds:
        fold_ids = _stratified_fold_ids(ds.labels, cal_folds, int(rng.integers(0, 2**31)))
        margins = np.empty(n)
        for j in range(cal_folds):
            tr = np.flatnonzero(fold_ids != j)
            te = np.flatnonzero(fold_ids == j)
            a, bb, conv, _ = _smo(
                np.ascontiguousarray(K[np.ix_(tr, tr)]), s[tr], C, tol, max_passes,
                np.uint64(rng.integers(0, 2**63)),
            )
            conv_flags.append(conv)
            margins[te] = (a * s[tr]) @ K[np.ix_(tr, te)] + bb
        calibration = "out_of_fold"
    else:
        # too few rows per class for internal folds; calibrate in sample
        margins = None
        calibration = "in_sample"

    alpha, intercept, conv, _ = _smo(K, s, C, tol, max_passes, np.uint64(rng.integers(0, 2**63)))
    conv_flags.append(conv)
    if margins is None:
        margins = (alpha * s) @ K + intercept
    platt_a, platt_b = _fit_platt(margins, ds.labels)
    sv = alpha > 0
    converged = all(conv_flags)
    if not converged:
        warnings.warn(
            f"SMO stopped after max_passes={max_passes} without full convergence",
            RuntimeWarning,
            stacklevel=2,
        )
    return SvmModel(
        mu, sigma, X[sv], (alpha * s)[sv], intercept, platt_a, platt_b,
        ds.n_features, stored, spec.seed, converged, None, calibration,
    )
