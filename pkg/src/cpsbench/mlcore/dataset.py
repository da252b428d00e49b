"""Design matrices for the three prediction tasks."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

import numpy as np

from ..analysis import load_run
from ..telemetry import SNAPSHOT_FIELDS, STATE_FEATURES, read_snapshots
from ..workloads import ROUND_FIELDS, RoundRecord, read_rounds

TASKS = ("power_state", "round_energy", "round_duration")
ROUND_FEATURES = ("velocity_pct", "acceleration_pct", "belt_speed", "payload_g")
TARGETS = {"power_state": "system_power_w", "round_energy": "energy_j",
           "round_duration": "duration_s"}


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    strata: tuple[Hashable, ...]
    target: str

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ValueError(f"X has shape {self.X.shape}, expected {len(self.feature_names)} columns")
        if self.y.shape != (self.X.shape[0],) or len(self.strata) != self.X.shape[0]:
            raise ValueError("X, y and strata disagree on the row count")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("design matrix contains missing or non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.X.shape


def _from_rows(rows_with_strata, target: str) -> DesignMatrix:
    X = np.array([[float(getattr(r, f)) for f in STATE_FEATURES] for r, _ in rows_with_strata],
                 dtype=float).reshape(-1, len(STATE_FEATURES))
    y = np.array([r.system_power_w for r, _ in rows_with_strata], dtype=float)
    return DesignMatrix(STATE_FEATURES, X, y, tuple(s for _, s in rows_with_strata), target)


def _from_rounds(records: Sequence[RoundRecord], task: str) -> DesignMatrix:
    attr = TARGETS[task]
    X = np.array([[float(getattr(r, f)) for f in ROUND_FEATURES] for r in records],
                 dtype=float).reshape(-1, len(ROUND_FEATURES))
    y = np.array([getattr(r, attr) for r in records], dtype=float)
    strata = tuple((r.velocity_pct, r.acceleration_pct) for r in records)
    return DesignMatrix(ROUND_FEATURES, X, y, strata, attr)


def assemble(task: str, source) -> DesignMatrix:
    """Build the design matrix of ``task`` from a run directory, a CSV file or trials.

    Power rows are stratified by the trial configuration (by the row's arm
    settings when read from a bare CSV); rounds by (velocity, acceleration).
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.is_dir():
            trials = load_run(path)
        elif path.is_file():
            return _assemble_file(task, path)
        else:
            raise FileNotFoundError(f"no dataset at {path}")
    else:
        trials = list(source)
    if task == "power_state":
        pairs = [(r, t.params.config_key) for t in trials for r in t.rows]
        return _from_rows(pairs, TARGETS[task])
    return _from_rounds([r for t in trials for r in t.rounds], task)


def _assemble_file(task: str, path: Path) -> DesignMatrix:
    with open(path, encoding="utf-8") as fh:
        header = tuple(fh.readline().strip().split(","))
    if task == "power_state":
        missing = [f for f in SNAPSHOT_FIELDS if f not in header]
        if missing:
            raise ValueError(f"{path}: not a snapshot table, missing column {missing[0]!r}")
        rows = read_snapshots(path)
        return _from_rows([(r, (r.workload_id, r.velocity_pct, r.acceleration_pct)) for r in rows],
                          TARGETS[task])
    missing = [f for f in ROUND_FIELDS if f not in header]
    if missing:
        raise ValueError(f"{path}: not a round table, missing column {missing[0]!r}")
    return _from_rounds(read_rounds(path), task)


__all__ = ["DesignMatrix", "TASKS", "ROUND_FEATURES", "assemble"]
