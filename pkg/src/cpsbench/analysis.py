"""Distribution summaries, per-configuration aggregation and figure emission."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .program import ExperimentParams
from .telemetry import NO_ROUND, SnapshotRow, _atomic_write, read_snapshots, read_table, write_table
from .workloads import RoundRecord, read_rounds

logger = logging.getLogger(__name__)

WHISKER = 1.5


@dataclass(frozen=True)
class BoxSummary:
    median: float
    q1: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]
    n: int


def box_summary(values: Iterable[float]) -> BoxSummary:
    """Quartiles by linear interpolation between order statistics; Tukey whiskers.

    Whiskers reach the most extreme observations within 1.5 IQR of the
    quartiles; anything beyond is an outlier.
    """
    x = np.sort(np.asarray(list(values), dtype=float))
    if x.size == 0:
        raise ValueError("box_summary needs at least one value")
    if not np.all(np.isfinite(x)):
        raise ValueError("box_summary got non-finite values")
    q1, med, q3 = np.quantile(x, [0.25, 0.5, 0.75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - WHISKER * iqr, q3 + WHISKER * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    outliers = x[(x < lo_fence) | (x > hi_fence)]
    return BoxSummary(float(med), float(q1), float(q3), float(iqr),
                      float(min(inside.min(), q1)), float(max(inside.max(), q3)),
                      tuple(float(v) for v in outliers), int(x.size))


# -- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class TrialData:
    """One executed experiment: its parameters, snapshot rows and round records."""

    params: ExperimentParams
    rows: tuple[SnapshotRow, ...]
    rounds: tuple[RoundRecord, ...] = ()


TRIAL_FIELDS = ("experiment", "workload_id", "velocity_pct", "acceleration_pct", "belt_speed",
                "payload_g", "rounds", "seed", "axis", "grid", "dwell_s", "file")
_TRIAL_TYPES = {"experiment": str, "workload_id": str, "velocity_pct": int, "acceleration_pct": int,
                "belt_speed": float, "payload_g": int, "rounds": int, "seed": int, "axis": str,
                "grid": str, "dwell_s": float, "file": str}


def encode_grid(grid: Sequence) -> str:
    return " ".join(str(v).lower() if isinstance(v, bool) else f"{v:g}" for v in grid)


def decode_grid(text: str) -> tuple:
    out: list = []
    for tok in text.split():
        if tok in ("true", "false"):
            out.append(tok == "true")
        else:
            v = float(tok)
            out.append(int(v) if v.is_integer() else v)
    return tuple(out)


def trial_record(params: ExperimentParams, file: str) -> list:
    return [params.label, params.workload_id, params.velocity_pct, params.acceleration_pct,
            float(params.belt_speed), params.payload_g, params.rounds, params.seed, params.axis,
            encode_grid(params.grid), float(params.dwell_s), file]


def write_trials_index(path: Path | str, entries: Sequence[tuple[ExperimentParams, str]]) -> Path:
    return write_table(path, TRIAL_FIELDS, (trial_record(p, f) for p, f in entries))


def load_run(run_dir: Path | str) -> list[TrialData]:
    """Load every trial listed in ``<run_dir>/trials.csv``."""
    run_dir = Path(run_dir)
    index = run_dir / "trials.csv"
    if not index.is_file():
        raise FileNotFoundError(f"{run_dir}: no trials.csv index")
    header, recs = read_table(index, types=_TRIAL_TYPES)
    missing = [f for f in TRIAL_FIELDS if f not in header]
    if missing:
        raise ValueError(f"{index}: missing column {missing[0]!r}")
    out = []
    for r in recs:
        params = ExperimentParams(
            workload_id=r["workload_id"], velocity_pct=r["velocity_pct"],
            acceleration_pct=r["acceleration_pct"], belt_speed=r["belt_speed"],
            payload_g=r["payload_g"], rounds=r["rounds"], seed=r["seed"], axis=r["axis"],
            grid=decode_grid(r["grid"]), dwell_s=r["dwell_s"], experiment_id=r["experiment"])
        base = run_dir / r["file"]
        rows = read_snapshots(base.with_suffix(".csv"))
        rounds_path = base.with_suffix(".rounds.csv")
        rounds = read_rounds(rounds_path) if rounds_path.is_file() else []
        out.append(TrialData(params, tuple(rows), tuple(rounds)))
    return out


# -- grouping ---------------------------------------------------------------

GROUP_KEYS = ("velocity", "acceleration", "belt_speed", "payload", "suction", "camera")
_PARAM_ATTR = {"velocity": "velocity_pct", "acceleration": "acceleration_pct",
               "belt_speed": "belt_speed", "payload": "payload_g"}
_ROW_ATTR = {"velocity": "velocity_pct", "acceleration": "acceleration_pct",
             "belt_speed": "belt_speed_mms", "payload": "payload_g",
             "suction": "suction_on", "camera": "camera_detect"}


def _group_values(dataset, key: str) -> dict[Any, list[float]]:
    if key not in GROUP_KEYS:
        raise ValueError(f"unknown group key {key!r}; expected one of {', '.join(GROUP_KEYS)}")
    groups: dict[Any, list[float]] = {}
    for item in dataset:
        if isinstance(item, SnapshotRow):
            rows, fixed = (item,), None
        else:
            rows = item.rows
            fixed = getattr(item.params, _PARAM_ATTR[key]) if key in _PARAM_ATTR else None
        for r in rows:
            if r.round_id == NO_ROUND:
                continue
            k = fixed if fixed is not None else getattr(r, _ROW_ATTR[key])
            groups.setdefault(k, []).append(r.system_power_w)
    return groups


def group_by_config(dataset: Iterable, key: str) -> dict[Any, BoxSummary]:
    """System-power box summary per distinct value of ``key``, ascending.

    ``dataset`` holds :class:`TrialData` (the key comes from the trial
    parameters) or bare :class:`SnapshotRow` items (the key comes from the
    row's own columns). Rows outside any round are ignored.
    """
    groups = _group_values(dataset, key)
    return {k: box_summary(groups[k]) for k in sorted(groups)}


# -- throughput -------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    velocity_pct: int
    acceleration_pct: int
    belt_speed: float
    payload_g: float
    n_rounds: int
    throughput_obj_per_min: float
    energy_j: float
    peak_power_w: float
    mean_power_w: float
    duration_s: float


CURVE_FIELDS = tuple(CurvePoint.__dataclass_fields__)


def throughput_curves(records: Iterable[RoundRecord]) -> list[CurvePoint]:
    """Per-configuration averages of round records, sorted by objects per minute."""
    groups: dict[tuple, list[RoundRecord]] = {}
    for r in records:
        key = (r.velocity_pct, r.acceleration_pct, r.belt_speed, r.payload_g)
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups):
        rs = groups[key]
        means = [math.fsum(getattr(r, name) for r in rs) / len(rs)
                 for name in ("throughput_obj_per_min", "energy_j", "peak_power_w",
                              "mean_power_w", "duration_s")]
        out.append(CurvePoint(*key, len(rs), *means))
    out.sort(key=lambda c: (c.throughput_obj_per_min, c.velocity_pct, c.acceleration_pct,
                            c.belt_speed, c.payload_g))
    return out


def factor_curve(records: Iterable[RoundRecord], factor: str) -> list[tuple[float, float, float, int]]:
    """(value, mean energy J, mean power W, n) per value of one factor, ascending."""
    attr = _PARAM_ATTR[factor]
    groups: dict[float, list[RoundRecord]] = {}
    for r in records:
        groups.setdefault(getattr(r, attr), []).append(r)
    return [(k, math.fsum(r.energy_j for r in g) / len(g),
             math.fsum(r.mean_power_w for r in g) / len(g), len(g))
            for k, g in sorted(groups.items())]


# -- SVG rendering ----------------------------------------------------------

_W, _H, _PAD = 640, 360, 56
_COLORS = ("#1f77b4", "#d62728", "#2ca02c")


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _label(v: Any) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)


def _nice_range(lo: float, hi: float) -> tuple[float, float]:
    if hi - lo < 1e-9:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo
    return lo - 0.05 * span, hi + 0.05 * span


class _Panel:
    def __init__(self, y0: int, title: str, ylabel: str, lo: float, hi: float):
        self.y0, self.title, self.ylabel = y0, title, ylabel
        self.lo, self.hi = _nice_range(lo, hi)
        self.parts: list[str] = []

    def y(self, v: float) -> float:
        top, bottom = self.y0 + 30, self.y0 + _H - _PAD
        return bottom - (v - self.lo) / (self.hi - self.lo) * (bottom - top)

    def frame(self, xlabel: str, right_axis: tuple[str, float, float] | None = None) -> None:
        top, bottom = self.y0 + 30, self.y0 + _H - _PAD
        p = self.parts
        p.append(f'<text x="{_W / 2}" y="{self.y0 + 18}" text-anchor="middle" '
                 f'font-size="14">{escape(self.title)}</text>')
        p.append(f'<line x1="{_PAD}" y1="{bottom}" x2="{_W - _PAD}" y2="{bottom}" stroke="black"/>')
        p.append(f'<line x1="{_PAD}" y1="{top}" x2="{_PAD}" y2="{bottom}" stroke="black"/>')
        for i in range(5):
            v = self.lo + (self.hi - self.lo) * i / 4
            yy = self.y(v)
            p.append(f'<text x="{_PAD - 4}" y="{yy:.1f}" text-anchor="end" font-size="10">{_fmt(v)}</text>')
        p.append(f'<text x="14" y="{(top + bottom) / 2:.1f}" font-size="11" '
                 f'transform="rotate(-90 14 {(top + bottom) / 2:.1f})" text-anchor="middle">'
                 f'{escape(self.ylabel)}</text>')
        p.append(f'<text x="{_W / 2}" y="{bottom + 36}" text-anchor="middle" font-size="11">'
                 f'{escape(xlabel)}</text>')
        if right_axis is not None:
            label, lo, hi = right_axis
            lo, hi = _nice_range(lo, hi)
            p.append(f'<line x1="{_W - _PAD}" y1="{top}" x2="{_W - _PAD}" y2="{bottom}" stroke="black"/>')
            for i in range(5):
                v = lo + (hi - lo) * i / 4
                yy = bottom - i / 4 * (bottom - top)
                p.append(f'<text x="{_W - _PAD + 4}" y="{yy:.1f}" font-size="10">{_fmt(v)}</text>')
            p.append(f'<text x="{_W - 10}" y="{(top + bottom) / 2:.1f}" font-size="11" '
                     f'transform="rotate(90 {_W - 10} {(top + bottom) / 2:.1f})" text-anchor="middle">'
                     f'{escape(label)}</text>')


def _svg(panels: Sequence[_Panel]) -> str:
    height = _H * len(panels)
    body = "\n".join(part for pn in panels for part in pn.parts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{height}" '
            f'viewBox="0 0 {_W} {height}" font-family="sans-serif">\n'
            f'<rect width="{_W}" height="{height}" fill="white"/>\n{body}\n</svg>\n')


def _box_panel(y0: int, title: str, xlabel: str, summaries: Mapping[Any, BoxSummary]) -> _Panel:
    lo = min(min(s.whisker_low, *s.outliers) if s.outliers else s.whisker_low for s in summaries.values())
    hi = max(max(s.whisker_high, *s.outliers) if s.outliers else s.whisker_high for s in summaries.values())
    pn = _Panel(y0, title, "Power (W)", lo, hi)
    pn.frame(xlabel)
    n = len(summaries)
    slot = (_W - 2 * _PAD) / n
    bottom = y0 + _H - _PAD
    for i, (k, s) in enumerate(summaries.items()):
        cx = _PAD + slot * (i + 0.5)
        half = min(18.0, slot * 0.3)
        p = pn.parts
        p.append(f'<line x1="{cx:.1f}" y1="{pn.y(s.whisker_low):.1f}" x2="{cx:.1f}" '
                 f'y2="{pn.y(s.whisker_high):.1f}" stroke="black"/>')
        p.append(f'<rect x="{cx - half:.1f}" y="{pn.y(s.q3):.1f}" width="{2 * half:.1f}" '
                 f'height="{max(pn.y(s.q1) - pn.y(s.q3), 0.5):.1f}" fill="#9ecae1" stroke="black"/>')
        p.append(f'<line x1="{cx - half:.1f}" y1="{pn.y(s.median):.1f}" x2="{cx + half:.1f}" '
                 f'y2="{pn.y(s.median):.1f}" stroke="#d62728" stroke-width="2"/>')
        for o in sorted(set(s.outliers)):
            p.append(f'<circle cx="{cx:.1f}" cy="{pn.y(o):.1f}" r="1.5" fill="none" stroke="gray"/>')
        p.append(f'<text x="{cx:.1f}" y="{bottom + 14}" text-anchor="middle" font-size="10">'
                 f'{escape(_label(k))}</text>')
    return pn


def _line_panel(y0: int, title: str, xlabel: str, xs: Sequence[float],
                series: Sequence[tuple[str, Sequence[float]]]) -> _Panel:
    """First series on the left axis; an optional second one on its own right axis."""
    left = series[0][1]
    pn = _Panel(y0, title, series[0][0], min(left), max(left))
    right = None
    if len(series) > 1:
        ys = series[1][1]
        right = (series[1][0], min(ys), max(ys))
    pn.frame(xlabel, right)
    xlo, xhi = _nice_range(min(xs), max(xs))
    top, bottom = y0 + 30, y0 + _H - _PAD

    def px(x: float) -> float:
        return _PAD + (x - xlo) / (xhi - xlo) * (_W - 2 * _PAD)

    for i in range(5):
        v = xlo + (xhi - xlo) * i / 4
        pn.parts.append(f'<text x="{px(v):.1f}" y="{bottom + 14}" text-anchor="middle" '
                        f'font-size="10">{_fmt(v)}</text>')
    for idx, (name, ys) in enumerate(series[:2]):
        if idx == 0:
            ymap = pn.y
        else:
            rlo, rhi = _nice_range(min(ys), max(ys))

            def ymap(v: float, rlo=rlo, rhi=rhi) -> float:
                return bottom - (v - rlo) / (rhi - rlo) * (bottom - top)
        pts = " ".join(f"{px(x):.1f},{ymap(y):.1f}" for x, y in zip(xs, ys))
        color = _COLORS[idx]
        pn.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            pn.parts.append(f'<circle cx="{px(x):.1f}" cy="{ymap(y):.1f}" r="2.5" fill="{color}"/>')
        pn.parts.append(f'<text x="{_PAD + 8}" y="{top + 14 * (idx + 1)}" font-size="11" '
                        f'fill="{color}">{escape(name)}</text>')
    return pn


# -- figures ----------------------------------------------------------------

BOX_FIELDS = ("panel", "group", "n", "median", "q1", "q3", "iqr", "whisker_low", "whisker_high",
              "n_outliers")


def _box_rows(panel: str, summaries: Mapping[Any, BoxSummary]) -> list[list]:
    return [[panel, _label(k), s.n, s.median, s.q1, s.q3, s.iqr, s.whisker_low, s.whisker_high,
             len(s.outliers)] for k, s in summaries.items()]


@dataclass(frozen=True)
class Figure:
    """A figure analogue: its CSV table and a ready-rendered SVG document."""

    name: str
    header: tuple[str, ...]
    rows: tuple[tuple, ...]
    svg: str


def _micro(trials: Sequence[TrialData], workload: str, axis: str | None = None) -> list[TrialData]:
    return [t for t in trials if t.params.workload_id == workload
            and (axis is None or t.params.axis == axis)]


def _box_figure(name: str, title: str, xlabel: str,
                panels: Sequence[tuple[str, Mapping[Any, BoxSummary]]]) -> Figure | None:
    panels = [(p, s) for p, s in panels if s]
    if not panels:
        return None
    rows = [tuple(r) for p, s in panels for r in _box_rows(p, s)]
    svg = _svg([_box_panel(i * _H, f"{title} ({p})" if len(panels) > 1 else title, xlabel
                           if len(panels) == 1 else p, s) for i, (p, s) in enumerate(panels)])
    return Figure(name, BOX_FIELDS, tuple(rows), svg)


def build_figures(trials: Sequence[TrialData]) -> dict[str, Figure | None]:
    """The eight figure analogues; an entry is ``None`` when its data is absent."""
    app = [t for t in trials if t.params.workload_id == "sorting"]
    records = [r for t in app for r in t.rounds]
    figs: dict[str, Figure | None] = {}
    figs["fig_velocity_power"] = _box_figure(
        "fig_velocity_power", "Power demand vs arm velocity", "velocity (%)",
        [("velocity", group_by_config(_micro(trials, "arm_sweep", "velocity"), "velocity"))])
    figs["fig_acceleration_power"] = _box_figure(
        "fig_acceleration_power", "Power demand vs arm acceleration", "acceleration (%)",
        [("acceleration", group_by_config(_micro(trials, "arm_sweep", "acceleration"), "acceleration"))])
    figs["fig_payload_power"] = _box_figure(
        "fig_payload_power", "Power demand vs payload", "payload (g)",
        [("payload", group_by_config(_micro(trials, "payload_sweep"), "payload"))])
    figs["fig_pump_power"] = _box_figure(
        "fig_pump_power", "Power demand vs suction pump status", "pump",
        [("suction", group_by_config(_micro(trials, "suction_toggle"), "suction"))])
    figs["fig_belt_power"] = _box_figure(
        "fig_belt_power", "Power demand vs belt speed", "belt speed (mm/s)",
        [("belt_speed", group_by_config(_micro(trials, "belt_sweep"), "belt_speed"))])
    figs["fig_app_power"] = _box_figure(
        "fig_app_power", "Application power demand", "",
        [(k, group_by_config(app, k)) for k in ("velocity", "acceleration", "belt_speed")])

    # Energy and power per round against each application factor.
    panels, rows = [], []
    for i, factor in enumerate(("velocity", "acceleration", "belt_speed")):
        curve = factor_curve(records, factor)
        if len(curve) < 1:
            continue
        xs = [c[0] for c in curve]
        panels.append(_line_panel(len(panels) * _H, f"Energy and power vs {factor}", factor, xs,
                                  [("energy per round (J)", [c[1] for c in curve]),
                                   ("mean power (W)", [c[2] for c in curve])]))
        rows += [(factor, c[0], c[3], c[1], c[2]) for c in curve]
    figs["fig_energy_power"] = (Figure("fig_energy_power", ("factor", "value", "n_rounds",
                                                            "energy_j", "mean_power_w"),
                                       tuple(rows), _svg(panels)) if panels else None)

    curve = throughput_curves(records)
    if curve:
        xs = [c.throughput_obj_per_min for c in curve]
        svg = _svg([
            _line_panel(0, "Energy per object vs throughput", "objects per minute", xs,
                        [("energy per object (J)", [c.energy_j for c in curve])]),
            _line_panel(_H, "Peak power vs throughput", "objects per minute", xs,
                        [("peak power (W)", [c.peak_power_w for c in curve])]),
        ])
        figs["fig_throughput"] = Figure("fig_throughput", CURVE_FIELDS,
                                        tuple(tuple(getattr(c, f) for f in CURVE_FIELDS) for c in curve),
                                        svg)
    else:
        figs["fig_throughput"] = None
    return figs


def emit_plots(figures: Mapping[str, Figure | None], out_dir: Path | str) -> list[Path]:
    """Write ``<name>.svg`` and ``<name>.csv`` per figure; empty figures are skipped."""
    out = Path(out_dir)
    written = []
    for name, fig in figures.items():
        if fig is None or not fig.rows:
            logger.warning("figure %s has no data; skipped", name)
            continue
        svg_path = out / f"{name}.svg"
        _atomic_write(svg_path, lambda fh, s=fig.svg: fh.write(s))
        written.append(svg_path)
        written.append(write_table(out / f"{name}.csv", fig.header, fig.rows))
    return written
