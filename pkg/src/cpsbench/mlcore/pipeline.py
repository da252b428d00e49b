"""Model comparison on one task: DT, RF and ET under the same folds."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..telemetry import write_table
from .dataset import DesignMatrix
from .evaluation import METRICS, MetricsReport, evaluate, kfold_stratified
from .forest import ForestModel, ForestParams, feature_importance, train_forest
from .tree import train_tree

MODELS = ("DT", "RF", "ET")


@dataclass(frozen=True)
class Hyper:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    feature_frac: float | None = None  # None: 1.0 up to 4 features, else 0.6

    def frac_for(self, n_features: int) -> float:
        if self.feature_frac is not None:
            return self.feature_frac
        return 1.0 if n_features <= 4 else 0.6


def model_fitter(name: str, n_features: int, hyper: Hyper = Hyper(), seed: int = 0):
    frac = hyper.frac_for(n_features)
    if name == "DT":
        return lambda X, y: train_tree(X, y, hyper.max_depth, hyper.min_leaf)
    if name == "RF":
        params = ForestParams(hyper.n_trees, hyper.max_depth, hyper.min_leaf, True, frac, seed, False)
    elif name == "ET":
        params = ForestParams(hyper.n_trees, hyper.max_depth, hyper.min_leaf, False, frac, seed, True)
    else:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODELS)}")
    return lambda X, y: train_forest(X, y, params)


@dataclass(frozen=True)
class Comparison:
    task: str
    reports: dict[str, MetricsReport]
    folds: int
    n_rows: int

    def render(self) -> str:
        """Fixed-width table, one model per line."""
        head = f"{'Model':<6}" + "".join(f"{m.upper():>11}" for m in METRICS)
        lines = [f"task: {self.task} ({self.n_rows} rows, {self.folds}-fold stratified CV)", head]
        for name, r in self.reports.items():
            lines.append(f"{name:<6}" + "".join(f"{getattr(r, m):>11.4f}" for m in METRICS))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Path | str) -> Path:
        return write_table(path, ("task", "model") + METRICS,
                           ([self.task, n] + [getattr(r, m) for m in METRICS]
                            for n, r in self.reports.items()))


def compare_models(task: str, dm: DesignMatrix, k: int = 5, seed: int = 0,
                   hyper: Hyper = Hyper(), models=MODELS) -> Comparison:
    folds = kfold_stratified(dm.strata, k, seed)
    reports = {}
    for name in models:
        reports[name], _ = evaluate(model_fitter(name, dm.X.shape[1], hyper, seed), dm.X, dm.y, folds)
    return Comparison(task, reports, k, dm.X.shape[0])


def fit_full(dm: DesignMatrix, seed: int = 0, hyper: Hyper = Hyper()) -> ForestModel:
    """Random forest on every row; used for the importance ranking."""
    frac = hyper.frac_for(dm.X.shape[1])
    params = ForestParams(hyper.n_trees, hyper.max_depth, hyper.min_leaf, True, frac, seed, False)
    return train_forest(dm.X, dm.y, params, dm.feature_names)


def write_importance(weights: dict[str, float], path: Path | str, task: str = "") -> Path:
    return write_table(path, ("task", "feature", "importance"),
                       ([task, f, w] for f, w in weights.items()))


__all__ = ["Comparison", "Hyper", "MODELS", "compare_models", "fit_full", "feature_importance",
           "model_fitter", "write_importance"]
