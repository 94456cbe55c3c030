"""Single-hidden-layer sigmoid network trained by seeded mini-batch descent.

Inputs are standardized; the loss is mean binary log-loss; updates use
classic momentum.  The default hidden width is ceil((n_features + 2) / 2).
"""

from __future__ import annotations

import math

import numpy as np

from .base import (
    LearnerSpec,
    TrainedModel,
    TrainingError,
    fit_standardizer,
    register_model_class,
)

DEFAULTS = {
    "hidden_units": None,
    "learning_rate": 0.3,
    "momentum": 0.2,
    "epochs": 500,
    "batch_size": 32,
}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _init_params(n_in: int, n_hidden: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [
        rng.uniform(-0.5, 0.5, size=(n_in, n_hidden)),
        rng.uniform(-0.5, 0.5, size=n_hidden),
        rng.uniform(-0.5, 0.5, size=(n_hidden, 1)),
        rng.uniform(-0.5, 0.5, size=1),
    ]


def _forward(params, X):
    w1, b1, w2, b2 = params
    hidden = _sigmoid(X @ w1 + b1)
    out = _sigmoid(hidden @ w2 + b2).ravel()
    return hidden, out


def _loss_and_grads(params, X, y):
    """Mean log-loss over the batch and its gradient for each parameter."""
    w1, b1, w2, b2 = params
    hidden, out = _forward(params, X)
    clipped = np.clip(out, 1e-12, 1.0 - 1e-12)
    loss = float(-(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped)).mean())
    delta_out = ((out - y) / y.shape[0])[:, None]
    g_w2 = hidden.T @ delta_out
    g_b2 = delta_out.sum(axis=0)
    delta_hidden = (delta_out @ w2.T) * hidden * (1.0 - hidden)
    g_w1 = X.T @ delta_hidden
    g_b1 = delta_hidden.sum(axis=0)
    return loss, [g_w1, g_b1, g_w2, g_b2]


@register_model_class
class MlpModel(TrainedModel):
    kind = "mlp"

    def __init__(self, mu, sigma, weights, n_features, params, seed):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.n_features = int(n_features)
        self.params = dict(params)
        self.seed = int(seed)

    def _proba(self, X: np.ndarray) -> np.ndarray:
        _, out = _forward(self.weights, (X - self.mu) / self.sigma)
        return out

    def fitted_state(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "weights": self.weights}

    @classmethod
    def _from_state(cls, doc: dict) -> "MlpModel":
        s = doc["state"]
        weights = [np.asarray(w, dtype=np.float64) for w in s["weights"]]
        # bias vectors round-trip as flat lists
        weights[1] = weights[1].ravel()
        weights[3] = weights[3].ravel()
        return cls(s["mu"], s["sigma"], weights, doc["n_features"], doc["params"], doc["seed"])


def train_mlp(ds, spec: LearnerSpec) -> MlpModel:
    params = spec.resolve(DEFAULTS)
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    epochs = int(params["epochs"])
    batch_size = int(params["batch_size"])
    if epochs < 0:
        raise ValueError("epochs must be nonnegative")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    lr = float(params["learning_rate"])
    momentum = float(params["momentum"])
    hidden = params["hidden_units"]
    if hidden is None:
        hidden = math.ceil((ds.n_features + 2) / 2)
    hidden = int(hidden)
    if hidden < 1:
        raise ValueError("hidden_units must be at least 1")

    mu, sigma = fit_standardizer(ds.features)
    X = (ds.features - mu) / sigma
    y = ds.labels.astype(np.float64)
    rng = np.random.default_rng(spec.seed)
    weights = _init_params(ds.n_features, hidden, rng)
    velocity = [np.zeros_like(w) for w in weights]
    n = X.shape[0]
    for epoch in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = perm[start:start + batch_size]
            loss, grads = _loss_and_grads(weights, X[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            for i in range(4):
                velocity[i] = momentum * velocity[i] - lr * grads[i]
                weights[i] = weights[i] + velocity[i]
    stored = dict(params)
    stored["hidden_units"] = hidden
    return MlpModel(mu, sigma, weights, ds.n_features, stored, spec.seed)
