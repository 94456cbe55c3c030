"""Screening pipeline for tabular retinal exam data.

Feature ranking (MDL-discretized information gain and a greedy wrapper),
from-scratch base learners (decision tree, random forest, MLP, SVM with
Platt-calibrated probabilities, logistic regression), out-of-fold stacking,
and repeated stratified cross-validation with table-style reports.
"""

from .dataset import (
    FoldAssignment,
    Provenance,
    TabularDataset,
    class_distribution,
    load_arff,
    load_csv,
    load_table,
    project_features,
    save_csv,
    stratified_k_folds,
    take_rows,
)
from .feature_selection import (
    DiscretizationScheme,
    FeatureRanking,
    FeatureScore,
    discretize_mdl,
    entropy,
    fit_discretization,
    information_gain,
    rank_by_information_gain,
    rank_features,
    wrapper_subset_search,
)
from .learners import (
    LearnerSpec,
    TrainedModel,
    TrainingError,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
)
from .ensemble import StackedModel, StackingSpec, predict_stacking, train_stacking
from .evaluation import (
    ConfusionMatrix,
    CvResult,
    MetricsReport,
    accuracy,
    auc,
    confusion_matrix,
    cross_validate,
    f_measure,
    precision,
    recall,
    summarize_tables,
)

__version__ = "0.1.0"
