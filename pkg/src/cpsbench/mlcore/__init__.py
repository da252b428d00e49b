"""Tree-ensemble regressors and the cross-validated evaluation pipeline."""

from .dataset import ROUND_FEATURES, TASKS, DesignMatrix, assemble
from .evaluation import METRICS, MetricsReport, evaluate, kfold_stratified, mean_report, regression_metrics
from .forest import ForestModel, ForestParams, feature_importance, train_forest
from .pipeline import MODELS, Comparison, Hyper, compare_models, fit_full, write_importance
from .tree import Tree, TreeNode, fit_tree, train_tree

__all__ = [
    "ROUND_FEATURES", "TASKS", "DesignMatrix", "assemble",
    "METRICS", "MetricsReport", "evaluate", "kfold_stratified", "mean_report", "regression_metrics",
    "ForestModel", "ForestParams", "feature_importance", "train_forest",
    "MODELS", "Comparison", "Hyper", "compare_models", "fit_full", "write_importance",
    "Tree", "TreeNode", "fit_tree", "train_tree",
]
