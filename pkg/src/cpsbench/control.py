"""Workload generation and the virtual-time execution controller.

``execute`` walks an :class:`InstructionProgram` against a simulated cell.
Time is virtual: instructions advance a clock, plugs are read at every whole
second, joint angles are published on a 100 ms grid while the arm moves, and
every command, state change and reading goes out on the telemetry bus.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import powerkin as pk
from .adapters import AdapterEvent, CellConfig, SimulatedCell
from .program import (ArmConfigure, ArmMoveJoints, BeltSet, CameraQuery, ExperimentParams,
                      InstructionProgram, MarkRound, PlaceCube, SuctionSet, Wait, translate)
from .telemetry import (JOINT_TOPICS, NO_ROUND, ROUND_TOPIC, BusConsumer, MetricMessage,
                        SnapshotJoiner, SnapshotRow, TopicBus, _atomic_write, export_csv)
from .workloads import RoundRecord, SortingScene, build_program, export_rounds, summarize_rounds

__all__ = ["ControllerConfig", "RunLog", "generate", "execute", "translate", "run_params"]

TICK_S = 0.1


@dataclass(frozen=True)
class ControllerConfig:
    """Knobs of the execution controller.

    ``latency`` is the (low, high) range of the seeded per-command dispatch
    delay applied before each device command; ``(0, 0)`` disables it.
    ``consumer_delay`` > 0 runs the telemetry consumer on its own thread and
    sleeps that long per message, to exercise back-pressure.
    """

    latency: tuple[float, float] = (0.05, 0.25)
    noise: pk.NoiseModel = pk.NoiseModel()
    camera_latency_s: float = 1.0
    joint_limit_deg: float = 135.0
    consumer_delay: float = 0.0
    threaded: bool = False

    def __post_init__(self) -> None:
        lo, hi = self.latency
        if not 0.0 <= lo <= hi:
            raise ValueError(f"latency range must satisfy 0 <= low <= high, got {self.latency}")


DEFAULT_CONFIG = ControllerConfig()


@dataclass
class RunLog:
    params: ExperimentParams
    events: tuple[AdapterEvent, ...]
    rows: tuple[SnapshotRow, ...]
    rounds: tuple[RoundRecord, ...]
    marks: tuple[tuple[float, str, int], ...]
    virtual_duration: float
    wall_seconds: float = field(default=0.0, compare=False)
    bus_published: int = field(default=0, compare=False)
    bus_high_water: int = field(default=0, compare=False)
    bus_lagging: bool = field(default=False, compare=False)

    def event_lines(self) -> list[str]:
        return [json.dumps(e.as_record(), sort_keys=True) for e in self.events]

    def rejected(self) -> list[AdapterEvent]:
        return [e for e in self.events if not e.accepted]

    def write(self, out_dir: Path | str, stem: str | None = None) -> dict[str, Path]:
        """Write ``<stem>.csv`` (snapshots), ``<stem>.rounds.csv`` and ``<stem>.events.jsonl``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or self.params.label
        paths = {
            "snapshots": export_csv(self.rows, out / f"{stem}.csv"),
            "rounds": export_rounds(self.rounds, out / f"{stem}.rounds.csv"),
        }
        ev_path = out / f"{stem}.events.jsonl"
        lines = self.event_lines()
        _atomic_write(ev_path, lambda fh: fh.write("".join(line + "\n" for line in lines)))
        paths["events"] = ev_path
        return paths


def generate(params: ExperimentParams, scene: SortingScene | None = None) -> InstructionProgram:
    """Build the instruction program for ``params`` (workload id already validated)."""
    return build_program(params, scene)


def _cell_config(program: InstructionProgram, cfg: ControllerConfig) -> CellConfig:
    kw = {k: tuple(v) if isinstance(v, (list, tuple)) else v
          for k, v in program.layout.items() if k in ("transfer_mm", "belt_pick", "camera_station")}
    return CellConfig(joint_limit_deg=cfg.joint_limit_deg, camera_latency_s=cfg.camera_latency_s, **kw)


class _Executor:
    def __init__(self, program: InstructionProgram, cfg: ControllerConfig):
        p = program.params
        self.program = program
        self.cfg = cfg
        noise_seq, latency_seq = np.random.SeedSequence(p.seed).spawn(2)
        self.latency_rng = np.random.default_rng(latency_seq)
        initial = pk.CellState(joint_angles=tuple(float(x) for x in program.start_pose),
                               settings=p.settings)
        self.cell = SimulatedCell(_cell_config(program, cfg), pk.PowerSampler(noise_seq, cfg.noise),
                                  initial)
        self.bus = TopicBus()
        self.joiner = SnapshotJoiner(p.workload_id)
        self.consumer: BusConsumer | None = None
        if cfg.threaded or cfg.consumer_delay > 0:
            self.consumer = BusConsumer(self.bus, self.joiner.add, delay=cfg.consumer_delay)
        self.next_sample = 0
        self.marks: list[tuple[float, str, int]] = []
        self.open_rounds: list[int] = []
        self.cell.listeners.append(self._on_change)

    # telemetry -------------------------------------------------------------
    def _pub(self, topic: str, t: float, value) -> None:
        self.bus.publish(MetricMessage(topic, t, value))

    def _publish_joints(self, t: float, joints) -> None:
        for topic, v in zip(JOINT_TOPICS, joints):
            self._pub(topic, t, float(v))

    def _publish_state(self, t: float, old: pk.CellState | None, new: pk.CellState) -> None:
        if old is None or old.joint_angles != new.joint_angles:
            self._publish_joints(t, new.joint_angles)
        if old is None or old.settings != new.settings:
            self._pub("state.velocity_pct", t, new.settings.velocity_pct)
            self._pub("state.acceleration_pct", t, new.settings.acceleration_pct)
        for name, topic in (("arm_moving", "state.arm_moving"), ("suction_on", "state.suction_on"),
                            ("belt_on", "state.belt_on"), ("belt_speed", "state.belt_speed_mms"),
                            ("camera_detect", "state.camera_detect"), ("payload_g", "state.payload_g")):
            value = getattr(new, name)
            if old is None or getattr(old, name) != value:
                self._pub(topic, t, value)

    def _on_change(self, t: float, old: pk.CellState, new: pk.CellState) -> None:
        self._publish_state(t, old, new)

    def _command(self, device: str, text: str) -> None:
        self._pub(f"command.{device}", self.cell.now, text)

    # time ------------------------------------------------------------------
    def _run_until(self, target: float) -> None:
        """Advance to ``target``, sampling plugs at whole seconds and ticking joints."""
        cell = self.cell
        while True:
            candidates = []
            if self.next_sample < target:
                candidates.append(float(self.next_sample))
            m = cell.motion
            tick = None
            if m is not None:
                k = math.floor(cell.now / TICK_S + 1e-9) + 1
                tick = k / 10.0
                if tick < m.end_t and tick < target:
                    candidates.append(tick)
            if not candidates:
                cell.advance(target)
                return
            t = min(candidates)
            cell.advance(t)
            if cell.motion is not None and tick == t:
                self._publish_joints(t, cell.joints_now())
            if self.next_sample == t:
                b = cell.plug.read_all()
                for topic, w in (("power.arm", b.arm_w), ("power.belt", b.belt_w),
                                 ("power.suction", b.suction_w), ("power.camera", b.camera_w)):
                    self._pub(topic, t, w)
                self.next_sample += 1

    def _dispatch(self) -> None:
        lo, hi = self.cfg.latency
        if hi > 0:
            self._run_until(self.cell.now + float(self.latency_rng.uniform(lo, hi)))

    # instructions ----------------------------------------------------------
    def step(self, ins) -> None:
        cell = self.cell
        if isinstance(ins, ArmMoveJoints):
            self._dispatch()
            self._command("arm", f"move_joints {list(ins.target)}")
            end = cell.arm.move_joints(ins.target, ins.settings)
            self._run_until(end)
        elif isinstance(ins, ArmConfigure):
            self._dispatch()
            self._command("arm", "configure")
            cell.arm.configure(ins.settings)
        elif isinstance(ins, BeltSet):
            self._dispatch()
            self._command("belt", f"set {ins.on} {ins.speed:g}")
            cell.belt.set(ins.on, ins.speed)
        elif isinstance(ins, SuctionSet):
            self._dispatch()
            self._command("suction", f"set {ins.on}")
            cell.suction.set(ins.on)
        elif isinstance(ins, CameraQuery):
            self._dispatch()
            self._command("camera", "query")
            cell.camera.query()
            self._run_until(cell.now + cell.camera.latency_s)
        elif isinstance(ins, Wait):
            self._run_until(cell.now + ins.seconds)
        elif isinstance(ins, PlaceCube):
            self._command("scene", f"place {ins.station} {ins.color} {ins.payload_g:g}")
            try:
                cell.place_cube(ins.station, ins.color, ins.payload_g)
            except ValueError as exc:
                cell.log("scene", {"cmd": "place", "station": ins.station, "error": str(exc)},
                         accepted=False)
        elif isinstance(ins, MarkRound):
            self.marks.append((cell.now, ins.phase, ins.round_id))
            if ins.phase == "begin":
                self.open_rounds.append(ins.round_id)
            else:
                self.open_rounds.pop()
            rid = self.open_rounds[-1] if self.open_rounds else NO_ROUND
            self._pub(ROUND_TOPIC, cell.now, rid)
        else:
            raise TypeError(f"unsupported instruction {type(ins).__name__}")

    def run(self) -> RunLog:
        start = time.perf_counter()
        if self.consumer is not None:
            self.consumer.start()
        self._publish_state(0.0, None, self.cell.state)
        self._pub(ROUND_TOPIC, 0.0, NO_ROUND)
        for ins in self.program:
            self.step(ins)
            if self.consumer is None:
                self.joiner.add_all(self.bus.drain())
        # Settle any motion still in flight so the run ends at rest.
        if self.cell.motion is not None:
            self._run_until(self.cell.motion.end_t)
        total = self.cell.now
        if self.consumer is not None:
            self.consumer.finish()
        else:
            self.joiner.add_all(self.bus.drain())
        rows = self.joiner.rows(int(math.floor(total + 1e-9)))
        params = self.program.params
        rounds = summarize_rounds(rows, self.marks, params)
        return RunLog(params=params, events=tuple(self.cell.events), rows=tuple(rows),
                      rounds=tuple(rounds), marks=tuple(self.marks), virtual_duration=total,
                      wall_seconds=time.perf_counter() - start,
                      bus_published=self.bus.published, bus_high_water=self.bus.high_water,
                      bus_lagging=self.bus.lagging)


def execute(program: InstructionProgram, config: ControllerConfig = DEFAULT_CONFIG) -> RunLog:
    """Run ``program`` on a fresh simulated cell; pure in (program, seed, config)."""
    return _Executor(program, config).run()


def run_params(params: ExperimentParams, config: ControllerConfig = DEFAULT_CONFIG,
               scene: SortingScene | None = None) -> RunLog:
    return execute(generate(params, scene), config)


def run_many(params_list: Sequence[ExperimentParams], config: ControllerConfig = DEFAULT_CONFIG,
             scene: SortingScene | None = None) -> list[RunLog]:
    return [run_params(p, config, scene) for p in params_list]
