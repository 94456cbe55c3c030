"""Out-of-fold stacking of base learners under a meta-classifier.

Base learners produce class-1 probabilities on internal held-out folds; the
meta-classifier is trained on those out-of-fold probabilities only, and the
bases are then refit on the full training data.  Every training row receives
exactly one out-of-fold probability per base.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import learners
from .dataset import TabularDataset, stratified_k_folds, take_rows
from .learners import LearnerSpec, TrainingError
from .learners.base import TrainedModel, model_from_doc, register_model_class


def default_base_specs(seed: int = 0) -> tuple[LearnerSpec, ...]:
    return (
        LearnerSpec("forest", seed=seed),
        LearnerSpec("mlp", seed=seed),
        LearnerSpec("svm", seed=seed),
    )


@dataclass(frozen=True)
class StackingSpec:
    """Base learner lineup, meta-classifier, and internal fold count.

    base_specs must name at least one learner; .default() gives the standard
    forest/mlp/svm lineup.
    """

    base_specs: tuple[LearnerSpec, ...] = ()
    meta_spec: LearnerSpec = field(default_factory=lambda: LearnerSpec("logistic"))
    internal_folds: int = 5
    seed: int = 0

    @classmethod
    def default(cls, seed: int = 0) -> "StackingSpec":
        return cls(
            base_specs=default_base_specs(seed),
            meta_spec=LearnerSpec("logistic", seed=seed),
            internal_folds=5,
            seed=seed,
        )


@register_model_class
class StackedModel(TrainedModel):
    kind = "stack"

    def __init__(self, base_models, meta_model, n_features, seed, internal_folds):
        self.base_models = list(base_models)
        self.meta_model = meta_model
        self.n_features = int(n_features)
        self.seed = int(seed)
        self.params = {"internal_folds": int(internal_folds)}

    def base_probabilities(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.column_stack([m._proba(X) for m in self.base_models])

    def _proba(self, X: np.ndarray) -> np.ndarray:
        return self.meta_model._proba(self.base_probabilities(X))

    def fitted_state(self) -> dict:
        return {
            "bases": [m.to_doc() for m in self.base_models],
            "meta": self.meta_model.to_doc(),
        }

    @classmethod
    def _from_state(cls, doc: dict) -> "StackedModel":
        bases = [model_from_doc(bd) for bd in doc["state"]["bases"]]
        meta = model_from_doc(doc["state"]["meta"])
        return cls(bases, meta, doc["n_features"], doc["seed"], doc["params"]["internal_folds"])


def _meta_feature_names(base_specs) -> tuple[str, ...]:
    return tuple(f"p{i}_{spec.kind}" for i, spec in enumerate(base_specs))


def train_stacking(ds: TabularDataset, spec: StackingSpec, trace: dict | None = None) -> StackedModel:
    """Train the stack: out-of-fold base probabilities, meta fit, base refit.

    trace, when given, records the internal fold assignment and the row
    indices used to train and score each (base, fold) job.
    """
    if ds.n_rows == 0:
        raise ValueError("empty dataset")
    base_specs = spec.base_specs
    if len(base_specs) < 1:
        raise ValueError("at least one base learner is required")
    if spec.internal_folds < 2:
        raise ValueError("internal_folds must be at least 2")

    assignment = stratified_k_folds(ds, spec.internal_folds, spec.seed)
    if trace is not None:
        trace["fold_of_row"] = assignment.fold_of_row.copy()
        trace["fits"] = []

    n = ds.n_rows
    meta_features = np.empty((n, len(base_specs)), dtype=np.float64)
    for b, base_spec in enumerate(base_specs):
        for fold in range(assignment.k):
            train_rows = assignment.train_rows(fold)
            test_rows = assignment.test_rows(fold)
            try:
                model = learners.train(take_rows(ds, train_rows), base_spec)
            except Exception as exc:
                raise TrainingError(
                    f"base learner {b} ({base_spec.kind}) failed on internal fold {fold}: {exc}"
                ) from exc
            meta_features[test_rows, b] = model._proba(ds.features[test_rows])
            if trace is not None:
                trace["fits"].append(
                    {"base": b, "fold": fold, "train_rows": train_rows, "scored_rows": test_rows}
                )

    meta_ds = TabularDataset.from_arrays(
        meta_features, ds.labels, _meta_feature_names(base_specs), source="stack-meta"
    )
    try:
        meta_model = learners.train(meta_ds, spec.meta_spec)
    except Exception as exc:
        raise TrainingError(f"meta learner ({spec.meta_spec.kind}) failed: {exc}") from exc

    base_models = []
    for b, base_spec in enumerate(base_specs):
        try:
            base_models.append(learners.train(ds, base_spec))
        except Exception as exc:
            raise TrainingError(
                f"base learner {b} ({base_spec.kind}) failed on the full data: {exc}"
            ) from exc
        if trace is not None:
            trace["fits"].append(
                {"base": b, "fold": None, "train_rows": np.arange(n), "scored_rows": np.empty(0, np.int64)}
            )
    return StackedModel(base_models, meta_model, ds.n_features, spec.seed, spec.internal_folds)


def predict_stacking(model: StackedModel, instance) -> tuple[int, float]:
    """Label and class-1 probability for one instance."""
    proba = model.predict_proba(instance)
    return int(proba >= 0.5), float(proba)
