"""Stratified k-fold splitting, regression metrics and cross-validated evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Callable, Hashable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

METRICS = ("mae", "mse", "rmse", "r2", "rmsle", "mape")


def kfold_stratified(strata: Sequence[Hashable], k: int = 5, seed: int = 0) -> np.ndarray:
    """Fold number per row.

    Rows of each stratum are shuffled, then dealt round-robin; the dealing
    position carries over between strata so fold sizes stay balanced.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    n = len(strata)
    if n == 0:
        raise ValueError("no rows to split")
    groups: dict[Hashable, list[int]] = {}
    for i, s in enumerate(strata):
        groups.setdefault(s, []).append(i)
    smallest = min(len(g) for g in groups.values())
    if smallest < k:
        logger.warning("smallest stratum has %d rows, fewer than k=%d folds", smallest, k)
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    offset = 0
    for key in sorted(groups, key=repr):
        rows = np.array(groups[key])
        rng.shuffle(rows)
        folds[rows] = (offset + np.arange(len(rows))) % k
        offset = (offset + len(rows)) % k
    return folds


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    rmse: float
    r2: float
    rmsle: float
    mape: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def regression_metrics(y_true, y_pred) -> MetricsReport:
    y = np.asarray(y_true, dtype=float)
    yh = np.asarray(y_pred, dtype=float)
    if y.shape != yh.shape or y.size == 0:
        raise ValueError("y_true and y_pred must be non-empty and of equal shape")
    if np.any(y <= -1) or np.any(yh <= -1):
        raise ValueError("rmsle needs values > -1")
    if np.any(y == 0):
        raise ValueError("mape is undefined for zero targets")
    e = yh - y
    mse = float(np.mean(e * e))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(e * e))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    dl = np.log1p(yh) - np.log1p(y)
    return MetricsReport(
        mae=float(np.mean(np.abs(e))),
        mse=mse,
        rmse=math.sqrt(mse),
        r2=r2,
        rmsle=math.sqrt(float(np.mean(dl * dl))),
        mape=float(np.mean(np.abs(e / y))),
    )


def mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    if not reports:
        raise ValueError("no fold reports to average")
    return MetricsReport(*(math.fsum(getattr(r, m) for r in reports) / len(reports) for m in METRICS))


def evaluate(fit: Callable, X, y, folds: np.ndarray) -> tuple[MetricsReport, list[MetricsReport]]:
    """Train ``fit(X_train, y_train)`` per fold and score it on the held-out rows.

    Returns the fold-averaged report and the per-fold reports.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    per_fold = []
    for f in np.unique(folds):
        test = folds == f
        model = fit(X[~test], y[~test])
        per_fold.append(regression_metrics(y[test], model.predict(X[test])))
    return mean_report(per_fold), per_fold
