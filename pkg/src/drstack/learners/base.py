"""Shared learner plumbing: specs, the trained-model contract, persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Raised when a learner fails during training (e.g. non-finite loss)."""


@dataclass(frozen=True)
class LearnerSpec:
    """Which learner to train, with hyperparameter overrides and a seed."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def resolve(self, defaults: dict) -> dict:
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise ValueError(
                f"unknown {self.kind} parameters: {sorted(unknown)}; "
                f"known: {sorted(defaults)}"
            )
        merged = dict(defaults)
        merged.update(self.params)
        return merged


def check_instance(x, n_features: int) -> np.ndarray:
    """Validate one feature vector or a batch against the model width."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != n_features:
            raise ValueError(f"model expects {n_features} features, got {arr.shape[0]}")
    elif arr.ndim == 2:
        if arr.shape[1] != n_features:
            raise ValueError(f"model expects {n_features} features, got {arr.shape[1]}")
    else:
        raise ValueError("instances must be 1-D or 2-D")
    return arr


class TrainedModel:
    """Common prediction surface for all fitted learners.

    Subclasses set `kind`, `n_features`, `params`, `seed` and implement
    `_proba(X)` over a 2-D batch plus the persistence hooks `fitted_state`
    and `_from_state`.
    """

    kind: str = ""
    n_features: int = 0

    def _proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, x) -> float | np.ndarray:
        """Probability of class 1 for one instance (or a batch)."""
        arr = check_instance(x, self.n_features)
        if arr.ndim == 1:
            return float(self._proba(arr[None, :])[0])
        return self._proba(arr)

    def predict(self, x) -> int | np.ndarray:
        """Class label; probability at least 0.5 maps to class 1."""
        p = self.predict_proba(x)
        if isinstance(p, float):
            return int(p >= 0.5)
        return (p >= 0.5).astype(np.int64)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return self.predict(np.atleast_2d(np.asarray(X, dtype=np.float64)))

    def fitted_state(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_state(cls, doc: dict) -> "TrainedModel":
        raise NotImplementedError

    def to_doc(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "n_features": int(self.n_features),
            "params": _plain(getattr(self, "params", {})),
            "seed": int(getattr(self, "seed", 0)),
            "state": _plain(self.fitted_state()),
        }


def _plain(value):
    """Convert arrays and numpy scalars to JSON-friendly builtins."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (dict, MappingProxyType)):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


_FROM_DOC: dict[str, type] = {}


def register_model_class(cls) -> type:
    """Class decorator wiring a model kind into document loading."""
    _FROM_DOC[cls.kind] = cls
    return cls


def model_to_doc(model) -> dict:
    return model.to_doc()


def model_from_doc(doc: dict):
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {version!r}, expected {FORMAT_VERSION}")
    kind = doc.get("kind")
    if kind == "stack" and kind not in _FROM_DOC:
        from .. import ensemble  # noqa: F401  registers the stack loader
    if kind not in _FROM_DOC:
        raise ValueError(f"unknown model kind {kind!r}")
    return _FROM_DOC[kind]._from_state(doc)


def save_model(model, path) -> None:
    """Persist a trained model as a versioned JSON document."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_doc(model), fh, allow_nan=False)
        fh.write("\n")


def load_model(path):
    """Load a model saved by save_model; rejects unknown format versions."""
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_doc(json.load(fh))


def fit_standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means and standard deviations; constant columns get scale 1."""
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    sigma = np.where(sigma == 0, 1.0, sigma)
    return mu, sigma
