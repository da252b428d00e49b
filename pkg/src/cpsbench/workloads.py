"""Micro-benchmarks and the sorting application as program builders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import powerkin as pk
from .program import (PAYLOADS_G, ExperimentParams, InstructionProgram, Step,
                      check_application_ranges, translate_all)
from .telemetry import SnapshotRow, read_table, write_table

Joints = tuple[float, float, float, float]

COLORS = ("red", "green", "blue", "yellow")
MICRO_KINDS = ("arm_sweep", "camera_toggle", "belt_sweep", "suction_toggle", "payload_sweep")

DEFAULT_STATIONS: dict[str, Joints] = {
    "home": (90.0, 0.0, 0.0, 0.0),
    "belt_pick": (-135.0, 40.0, 40.0, 0.0),
    "camera_station": (135.0, 10.0, 10.0, 0.0),
    "bucket_red": (-110.0, 40.0, 40.0, 0.0),
    "bucket_green": (-90.0, 40.0, 40.0, 0.0),
    "bucket_blue": (-70.0, 40.0, 40.0, 0.0),
    "bucket_yellow": (-50.0, 40.0, 40.0, 0.0),
}

# Micro-benchmark arm path A -> B -> A.
POSE_A: Joints = (0.0, 0.0, 0.0, 0.0)
POSE_B: Joints = (90.0, 30.0, 30.0, 0.0)


@dataclass(frozen=True)
class Cube:
    color: str
    payload_g: float = 0.0


@dataclass(frozen=True)
class SortingScene:
    cubes: tuple[Cube, ...] = ()
    transfer_mm: float = 200.0
    hover_deg: float = 40.0
    stations: dict = field(default_factory=lambda: dict(DEFAULT_STATIONS))

    def __post_init__(self) -> None:
        missing = [s for s in DEFAULT_STATIONS if s not in self.stations]
        if missing:
            raise ValueError(f"scene lacks station(s): {', '.join(missing)}")
        if self.transfer_mm <= 0:
            raise ValueError("transfer_mm must be positive")

    def hover(self, station: str) -> Joints:
        j = self.stations[station]
        return (j[0], j[1] - self.hover_deg, j[2] - self.hover_deg, j[3])

    def bucket_for(self, color: str) -> str | None:
        name = f"bucket_{color}"
        return name if color in COLORS and name in self.stations else None

    def with_queue(self, params: ExperimentParams) -> SortingScene:
        """Queue of ``params.rounds`` cubes cycling through the four colors."""
        cubes = tuple(Cube(COLORS[i % len(COLORS)], float(params.payload_g))
                      for i in range(params.rounds))
        return replace(self, cubes=cubes)


def scene_layout(scene: SortingScene) -> dict:
    return {"transfer_mm": scene.transfer_mm,
            "belt_pick": scene.stations["belt_pick"],
            "camera_station": scene.stations["camera_station"]}


_SCENE_KEYS = ("transfer_mm", "hover_deg", "cubes") + tuple(DEFAULT_STATIONS)


def load_scene(path: Path | str) -> SortingScene:
    """Read a scene from ``key = value`` lines.

    Keys: ``transfer_mm``, ``hover_deg``, one key per station holding four
    comma-separated joint angles (``home``, ``belt_pick``, ``camera_station``,
    ``bucket_<color>``), and ``cubes`` as ``color:grams`` items separated by
    commas. ``#`` starts a comment; omitted keys keep their defaults.
    """
    path = Path(path)
    stations = dict(DEFAULT_STATIONS)
    kw: dict = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in ("transfer_mm", "hover_deg"):
                kw[key] = float(value)
            elif key == "cubes":
                cubes = []
                for item in filter(None, (s.strip() for s in value.split(","))):
                    color, _, grams = item.partition(":")
                    cubes.append(Cube(color.strip(), float(grams or 0)))
                kw["cubes"] = tuple(cubes)
            elif key in stations:
                joints = tuple(float(v) for v in value.split(","))
                if len(joints) != 4:
                    raise ValueError("needs 4 joint angles")
                stations[key] = joints
            else:
                raise ValueError(f"unknown key (expected one of {', '.join(_SCENE_KEYS)})")
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {key}: {exc}") from None
    return SortingScene(stations=stations, **kw)


# -- sorting ----------------------------------------------------------------

def sorting_steps(params: ExperimentParams, scene: SortingScene) -> list[Step]:
    check_application_ranges(params)
    s = params.settings
    st = scene.stations
    transfer_s = scene.transfer_mm / params.belt_speed
    steps = [Step("configure", {"settings": s})]
    for rid, cube in enumerate(scene.cubes):
        bucket = scene.bucket_for(cube.color)
        steps += [
            Step("begin_round", {"round_id": rid}),
            Step("inject_cube", {"color": cube.color, "payload_g": cube.payload_g}),          # 1
            Step("belt_transfer", {"speed": params.belt_speed, "seconds": transfer_s}),       # 2
            Step("pick", {"hover": scene.hover("belt_pick"), "target": st["belt_pick"],       # 3
                          "settings": s}),
            Step("present_to_camera", {"target": st["camera_station"], "settings": s}),     # 3-4
        ]
        if bucket is None:
            steps.append(Step("drop_at", {"target": st["home"], "settings": s}))
        else:
            steps.append(Step("place", {"hover": scene.hover(bucket), "target": st[bucket],  # 5
                                        "settings": s}))
        steps += [
            Step("return_home", {"target": st["home"], "settings": s}),
            Step("end_round", {"round_id": rid}),
        ]
    # Final look at the empty station: nothing detected, the loop halts.
    steps.append(Step("camera_query"))
    return steps


def build_sorting(params: ExperimentParams, scene: SortingScene | None = None) -> InstructionProgram:
    if params.workload_id != "sorting":
        raise ValueError(f"build_sorting got workload {params.workload_id!r}")
    scene = scene or SortingScene()
    if not scene.cubes:
        scene = scene.with_queue(params)
    prog = translate_all(sorting_steps(params, scene), params)
    return replace(prog, start_pose=scene.stations["home"], layout=scene_layout(scene))


# -- micro-benchmarks -------------------------------------------------------

def default_grid(params: ExperimentParams) -> tuple:
    kind = params.workload_id
    if kind == "arm_sweep":
        return tuple(range(0, 101, 10))
    if kind == "belt_sweep":
        return tuple(range(0, 81, 10))
    if kind == "payload_sweep":
        return PAYLOADS_G
    if kind in ("camera_toggle", "suction_toggle"):
        return (False, True)
    raise ValueError(f"no grid for workload {kind!r}")


def _cycle_steps(settings: pk.ArmSettings, a: Joints, b: Joints, dwell_s: float) -> list[Step]:
    try:
        cycle = 2 * pk.joint_move_duration(a, b, settings)
    except pk.UnreachableMotionError:
        # The adapter will reject the move; the phase still lasts dwell_s.
        return [Step("move", {"target": b, "settings": settings}), Step("wait", {"seconds": dwell_s})]
    n = max(1, math.ceil(dwell_s / cycle))
    out = []
    for _ in range(n):
        out += [Step("move", {"target": b, "settings": settings}),
                Step("move", {"target": a, "settings": settings})]
    return out


def micro_steps(params: ExperimentParams, scene: SortingScene | None = None) -> list[Step]:
    kind = params.workload_id
    if kind not in MICRO_KINDS:
        raise ValueError(f"unknown micro-benchmark {kind!r}; available: {', '.join(MICRO_KINDS)}")
    scene = scene or SortingScene()
    grid = tuple(params.grid) or default_grid(params)
    if not grid:
        raise ValueError("empty grid")
    dwell = params.dwell_s
    steps: list[Step] = []
    for phase, value in enumerate(grid):
        steps.append(Step("begin_round", {"round_id": phase}))
        if kind == "arm_sweep":
            v = int(value)
            if not 0 <= v <= 100:
                raise ValueError(f"invalid grid value {value!r} for arm_sweep (0-100)")
            s = (pk.ArmSettings(v, params.acceleration_pct) if params.axis == "velocity"
                 else pk.ArmSettings(params.velocity_pct, v))
            steps.append(Step("configure", {"settings": s}))
            steps += _cycle_steps(s, POSE_A, POSE_B, dwell)
        elif kind == "belt_sweep":
            speed = float(value)
            if not 0 <= speed <= pk.BELT_SPEED_MAX:
                raise ValueError(f"invalid grid value {value!r} for belt_sweep (0-80)")
            if speed > 0:
                steps += [Step("belt_set", {"on": True, "speed": speed}),
                          Step("wait", {"seconds": dwell}),
                          Step("belt_set", {"on": False, "speed": 0.0})]
            else:
                steps.append(Step("wait", {"seconds": dwell}))
        elif kind == "suction_toggle":
            on = _as_bool(value)
            if on:
                steps += [Step("suction", {"on": True}), Step("wait", {"seconds": dwell}),
                          Step("suction", {"on": False})]
            else:
                steps.append(Step("wait", {"seconds": dwell}))
        elif kind == "camera_toggle":
            present = _as_bool(value)
            station = "camera_station" if present else None
            steps.append(Step("place_cube", {"station": station, "color": "red", "payload_g": 0.0}))
            # Each query holds the camera for its processing latency.
            steps += [Step("camera_query")] * max(1, int(round(dwell)))
            steps.append(Step("place_cube", {"station": None, "color": "none", "payload_g": 0.0}))
        else:  # payload_sweep
            w = int(value)
            if w not in PAYLOADS_G:
                raise ValueError(f"invalid grid value {value!r} for payload_sweep {PAYLOADS_G}")
            s = params.settings
            hover = scene.hover("belt_pick")
            pick = scene.stations["belt_pick"]
            steps += [
                Step("configure", {"settings": s}),
                Step("place_cube", {"station": "belt_pick", "color": "red", "payload_g": w}),
                Step("pick", {"hover": hover, "target": pick, "settings": s}),
            ]
            steps += _cycle_steps(s, hover, POSE_B, dwell)
            steps += [
                Step("place", {"hover": hover, "target": pick, "settings": s}),
                Step("place_cube", {"station": None, "color": "none", "payload_g": 0.0}),
            ]
        steps.append(Step("end_round", {"round_id": phase}))
    return steps


def _as_bool(value) -> bool:
    if isinstance(value, str):
        if value.lower() in ("1", "true", "on", "present"):
            return True
        if value.lower() in ("0", "false", "off", "absent"):
            return False
        raise ValueError(f"invalid on/off grid value {value!r}")
    return bool(value)


def build_micro(kind: str, params: ExperimentParams, scene: SortingScene | None = None) -> InstructionProgram:
    if params.workload_id != kind:
        params = replace(params, workload_id=kind)
    prog = translate_all(micro_steps(params, scene), params)
    scene = scene or SortingScene()
    start = scene.hover("belt_pick") if kind == "payload_sweep" else POSE_A
    return replace(prog, start_pose=start, layout=scene_layout(scene))


def build_program(params: ExperimentParams, scene: SortingScene | None = None) -> InstructionProgram:
    if params.workload_id == "sorting":
        return build_sorting(params, scene)
    return build_micro(params.workload_id, params, scene)


# -- round summaries --------------------------------------------------------

@dataclass(frozen=True)
class RoundRecord:
    experiment: str
    workload_id: str
    round_id: int
    velocity_pct: int
    acceleration_pct: int
    belt_speed: float
    payload_g: float
    duration_s: float
    mean_power_w: float
    peak_power_w: float
    energy_j: float
    throughput_obj_per_min: float


ROUND_FIELDS = tuple(RoundRecord.__dataclass_fields__)


def summarize_round(rows: Sequence[SnapshotRow], begin_t: float, end_t: float,
                    round_id: int, params: ExperimentParams) -> RoundRecord:
    if end_t <= begin_t:
        raise ValueError(f"round {round_id}: end marker {end_t} not after begin {begin_t}")
    if not rows:
        raise ValueError(f"round {round_id}: no snapshot rows")
    watts = [r.system_power_w for r in rows]
    duration = end_t - begin_t
    mean_w = math.fsum(watts) / len(watts)
    return RoundRecord(
        experiment=params.label,
        workload_id=params.workload_id,
        round_id=round_id,
        velocity_pct=params.velocity_pct,
        acceleration_pct=params.acceleration_pct,
        belt_speed=float(params.belt_speed),
        payload_g=float(params.payload_g),
        duration_s=duration,
        mean_power_w=mean_w,
        peak_power_w=max(watts),
        energy_j=mean_w * duration,
        throughput_obj_per_min=60.0 / duration,
    )


def round_spans(marks: Sequence[tuple[float, str, int]]) -> list[tuple[int, float, float]]:
    """Pair ``(t, "begin"|"end", round_id)`` markers into ``(round_id, begin, end)``."""
    open_: dict[int, float] = {}
    spans = []
    for t, phase, rid in marks:
        if phase == "begin":
            if rid in open_:
                raise ValueError(f"round {rid} begins twice")
            open_[rid] = t
        else:
            if rid not in open_:
                raise ValueError(f"unmatched end marker for round {rid}")
            spans.append((rid, open_.pop(rid), t))
    if open_:
        raise ValueError(f"unmatched begin marker for round(s) {sorted(open_)}")
    return spans


def summarize_rounds(rows: Sequence[SnapshotRow], marks, params: ExperimentParams) -> list[RoundRecord]:
    by_round: dict[int, list[SnapshotRow]] = {}
    for r in rows:
        by_round.setdefault(r.round_id, []).append(r)
    out = []
    for rid, begin, end in round_spans(marks):
        rr = by_round.get(rid)
        if not rr:
            continue  # shorter than one sampling period, or cut off by the trial end
        out.append(summarize_round(rr, begin, end, rid, params))
    return out


def export_rounds(records: Sequence[RoundRecord], path: Path | str) -> Path:
    return write_table(path, ROUND_FIELDS, ([getattr(r, f) for f in ROUND_FIELDS] for r in records))


def read_rounds(path: Path | str) -> list[RoundRecord]:
    types = {"experiment": str, "workload_id": str, "round_id": int, "velocity_pct": int,
             "acceleration_pct": int}
    types.update({f: float for f in ROUND_FIELDS if f not in types})
    header, recs = read_table(path, types=types)
    missing = [f for f in ROUND_FIELDS if f not in header]
    if missing:
        raise ValueError(f"{path}: round schema mismatch, missing column {missing[0]!r}")
    return [RoundRecord(**{f: r[f] for f in ROUND_FIELDS}) for r in recs]
