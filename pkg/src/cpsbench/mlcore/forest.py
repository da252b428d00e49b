"""Bagged tree ensembles: random forest and extra trees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import Tree, _as_matrix, fit_tree


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    bootstrap: bool = True
    feature_frac: float = 1.0
    seed: int = 0
    extra_random: bool = False

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 < self.feature_frac <= 1.0:
            raise ValueError(f"feature_frac must be in (0, 1], got {self.feature_frac}")


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[Tree, ...]
    tree_seeds: tuple[int, ...]
    params: ForestParams
    feature_names: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        return np.mean(np.stack([t.predict(X) for t in self.trees]), axis=0)

    def dump(self) -> str:
        names = self.feature_names or None
        return "".join(f"# tree {i} seed={s}\n{t.dump(names)}"
                       for i, (t, s) in enumerate(zip(self.trees, self.tree_seeds)))


def tree_seeds(seed: int, n_trees: int) -> list[int]:
    """Per-tree seeds fixed up front, so results do not depend on scheduling."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees, dtype=np.uint32)]


def train_forest(X, y, params: ForestParams = ForestParams(), feature_names=()) -> ForestModel:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a forest on an empty matrix")
    n_try = max(1, int(round(params.feature_frac * p)))
    seeds = tree_seeds(params.seed, params.n_trees)
    trees = []
    for s in seeds:
        idx = np.random.default_rng(s).integers(0, n, n) if params.bootstrap else None
        trees.append(fit_tree(X, y, max_depth=params.max_depth, min_leaf=params.min_leaf,
                              n_try=n_try, extra_random=params.extra_random,
                              sample_idx=idx, seed=s))
    return ForestModel(tuple(trees), tuple(seeds), params, tuple(feature_names))


def feature_importance(model: ForestModel | Tree, names=None) -> dict[str, float]:
    """Variance reduction per split feature, summed over trees, normalized to 1."""
    trees = model.trees if isinstance(model, ForestModel) else (model,)
    if not trees:
        raise ValueError("model has no trained trees")
    total = np.sum([t.importances() for t in trees], axis=0)
    p = trees[0].n_features
    if names is None:
        names = getattr(model, "feature_names", ()) or tuple(f"x{i}" for i in range(p))
    if len(names) != p:
        raise ValueError(f"{len(names)} names for {p} features")
    s = total.sum()
    weights = total / s if s > 0 else np.zeros(p)
    return {name: float(w) for name, w in zip(names, weights)}
