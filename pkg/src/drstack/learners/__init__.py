"""Base learners: decision tree, random forest, MLP, SVM, logistic regression.

Every learner trains from a (dataset, spec) pair, predicts class-1
probabilities, and serializes to a versioned JSON document.
"""

from __future__ import annotations

from .base import (
    FORMAT_VERSION,
    LearnerSpec,
    TrainedModel,
    TrainingError,
    load_model,
    model_from_doc,
    model_to_doc,
    save_model,
)
from .forest import train_random_forest
from .logistic import train_logistic
from .mlp import train_mlp
from .svm import train_svm
from .tree import train_decision_tree

__all__ = [
    "FORMAT_VERSION",
    "LearnerSpec",
    "TrainedModel",
    "TrainingError",
    "train",
    "train_decision_tree",
    "train_random_forest",
    "train_mlp",
    "train_svm",
    "train_logistic",
    "predict",
    "predict_proba",
    "register_trainer",
    "save_model",
    "load_model",
    "model_to_doc",
    "model_from_doc",
]

_TRAINERS = {
    "tree": train_decision_tree,
    "forest": train_random_forest,
    "mlp": train_mlp,
    "svm": train_svm,
    "logistic": train_logistic,
}


def register_trainer(kind: str, trainer) -> None:
    """Extension point: route LearnerSpec(kind=...) to a custom trainer."""
    _TRAINERS[kind] = trainer


def train(ds, spec: LearnerSpec) -> TrainedModel:
    """Train the learner named by spec.kind on the dataset."""
    trainer = _TRAINERS.get(spec.kind)
    if trainer is None:
        raise ValueError(f"unknown learner kind {spec.kind!r}; known: {sorted(_TRAINERS)}")
    return trainer(ds, spec)


def predict(model: TrainedModel, instance) -> int:
    """Class label for one instance; probability at least 0.5 maps to 1."""
    return model.predict(instance)


def predict_proba(model: TrainedModel, instance) -> float:
    """Probability of class 1 for one instance."""
    return model.predict_proba(instance)
