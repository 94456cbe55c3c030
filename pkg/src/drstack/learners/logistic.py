"""L2-regularized logistic regression fit by full-batch gradient descent.

Inputs are standardized; the objective is mean log-loss plus an L2 penalty
on weights and bias; parameters start at zero and take a fixed number of
steps whose size is set from a power-iteration bound on the curvature.
"""

from __future__ import annotations

import numpy as np

from .base import (
    LearnerSpec,
    TrainedModel,
    fit_standardizer,
    register_model_class,
)

DEFAULTS = {"l2": 1e-4, "iterations": 2000, "learning_rate": None}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _curvature_bound(Xa: np.ndarray, l2: float) -> float:
    """Lipschitz constant of the gradient via power iteration on X'X/n."""
    n, d = Xa.shape
    v = np.ones(d) / np.sqrt(d)
    lam = 0.0
    for _ in range(20):
        w = Xa.T @ (Xa @ v) / n
        norm = np.linalg.norm(w)
        if norm == 0:
            lam = 0.0
            break
        lam = norm
        v = w / norm
    return 0.25 * lam + l2


def fit_logistic_arrays(
    X: np.ndarray, y: np.ndarray, *, l2: float, iterations: int,
    learning_rate: float | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Fit on raw arrays; returns (mu, sigma, weights, bias)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if l2 < 0:
        raise ValueError("l2 must be nonnegative")
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    mu, sigma = fit_standardizer(X)
    Z = (X - mu) / sigma
    n = Z.shape[0]
    Xa = np.hstack([Z, np.ones((n, 1))])
    if learning_rate is None:
        learning_rate = 1.0 / _curvature_bound(Xa, l2)
    wb = np.zeros(Xa.shape[1])
    for _ in range(iterations):
        p = _sigmoid(Xa @ wb)
        grad = Xa.T @ (p - y) / n + l2 * wb
        wb = wb - learning_rate * grad
    return mu, sigma, wb[:-1], float(wb[-1])


@register_model_class
class LogisticModel(TrainedModel):
    kind = "logistic"

    def __init__(self, mu, sigma, weights, bias, n_features, params, seed):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.n_features = int(n_features)
        self.params = dict(params)
        self.seed = int(seed)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        Z = (X - self.mu) / self.sigma
        return _sigmoid(Z @ self.weights + self.bias)

    def fitted_state(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "weights": self.weights, "bias": self.bias}

    @classmethod
    def _from_state(cls, doc: dict) -> "LogisticModel":
        s = doc["state"]
        return cls(
            s["mu"], s["sigma"], s["weights"], s["bias"],
            doc["n_features"], doc["params"], doc["seed"],
        )


def train_logistic(ds, spec: LearnerSpec) -> LogisticModel:
    params = spec.resolve(DEFAULTS)
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    mu, sigma, weights, bias = fit_logistic_arrays(
        ds.features,
        ds.labels,
        l2=float(params["l2"]),
        iterations=int(params["iterations"]),
        learning_rate=params["learning_rate"],
    )
    return LogisticModel(mu, sigma, weights, bias, ds.n_features, params, spec.seed)
