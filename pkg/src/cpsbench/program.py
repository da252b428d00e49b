"""Experiment parameters, device instructions and the workload-step translator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .powerkin import BELT_SPEED_MAX, N_JOINTS, ArmSettings

PAYLOADS_G = (0, 195, 340, 535, 730)
WORKLOADS = ("sorting", "arm_sweep", "camera_toggle", "belt_sweep", "suction_toggle", "payload_sweep")

APP_VELOCITY = (30, 100)
APP_ACCELERATION = (20, 100)
APP_BELT = (10, 80)

Joints = tuple[float, float, float, float]


# -- instructions -----------------------------------------------------------

@dataclass(frozen=True)
class ArmConfigure:
    settings: ArmSettings


@dataclass(frozen=True)
class ArmMoveJoints:
    target: Joints
    settings: ArmSettings

    def __post_init__(self) -> None:
        if len(self.target) != N_JOINTS:
            raise ValueError(f"ArmMoveJoints.target needs {N_JOINTS} angles")


@dataclass(frozen=True)
class BeltSet:
    on: bool
    speed: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.speed <= BELT_SPEED_MAX:
            raise ValueError(f"BeltSet.speed {self.speed} outside [0, {BELT_SPEED_MAX}]")
        if not self.on and self.speed != 0.0:
            raise ValueError("BeltSet.speed must be 0 when off")


@dataclass(frozen=True)
class SuctionSet:
    on: bool


@dataclass(frozen=True)
class CameraQuery:
    pass


@dataclass(frozen=True)
class Wait:
    seconds: float

    def __post_init__(self) -> None:
        if self.seconds < 0:
            raise ValueError("Wait.seconds must be >= 0")


@dataclass(frozen=True)
class MarkRound:
    phase: str  # "begin" | "end"
    round_id: int

    def __post_init__(self) -> None:
        if self.phase not in ("begin", "end"):
            raise ValueError(f"MarkRound.phase must be begin/end, got {self.phase!r}")


@dataclass(frozen=True)
class PlaceCube:
    """Operator action: put a cube somewhere in the scene (or clear it with station=None)."""

    station: str | None
    color: str = "none"
    payload_g: float = 0.0


Instruction = Union[ArmConfigure, ArmMoveJoints, BeltSet, SuctionSet, CameraQuery,
                    Wait, MarkRound, PlaceCube]


# -- parameters & programs --------------------------------------------------

@dataclass(frozen=True)
class ExperimentParams:
    workload_id: str
    velocity_pct: int = 50
    acceleration_pct: int = 50
    belt_speed: float = 40.0
    payload_g: int = 0
    rounds: int = 1
    seed: int = 0
    axis: str = "velocity"
    grid: tuple = ()
    dwell_s: float = 300.0
    experiment_id: str = ""

    def __post_init__(self) -> None:
        if self.workload_id not in WORKLOADS:
            raise ValueError(f"unknown workload {self.workload_id!r}; available: {', '.join(WORKLOADS)}")
        ArmSettings(self.velocity_pct, self.acceleration_pct)
        if not 0.0 <= self.belt_speed <= BELT_SPEED_MAX:
            raise ValueError(f"belt_speed {self.belt_speed} outside [0, {BELT_SPEED_MAX}]")
        if self.payload_g not in PAYLOADS_G:
            raise ValueError(f"payload_g must be one of {PAYLOADS_G}, got {self.payload_g}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.axis not in ("velocity", "acceleration"):
            raise ValueError(f"axis must be velocity or acceleration, got {self.axis!r}")
        if self.dwell_s <= 0:
            raise ValueError("dwell_s must be positive")

    @property
    def settings(self) -> ArmSettings:
        return ArmSettings(self.velocity_pct, self.acceleration_pct)

    @property
    def config_key(self) -> tuple:
        return (self.workload_id, self.velocity_pct, self.acceleration_pct,
                self.belt_speed, self.payload_g)

    @property
    def label(self) -> str:
        if self.experiment_id:
            return self.experiment_id
        return (f"{self.workload_id}-v{self.velocity_pct}-a{self.acceleration_pct}"
                f"-b{self.belt_speed:g}-p{self.payload_g}")


def check_application_ranges(p: ExperimentParams) -> None:
    for name, value, (lo, hi) in (("velocity_pct", p.velocity_pct, APP_VELOCITY),
                                  ("acceleration_pct", p.acceleration_pct, APP_ACCELERATION),
                                  ("belt_speed", p.belt_speed, APP_BELT)):
        if not lo <= value <= hi:
            raise ValueError(
                f"{name}={value:g} outside the application range {lo}-{hi} "
                f"(velocity 30-100, acceleration 20-100, belt 10-80)")


@dataclass(frozen=True)
class InstructionProgram:
    instructions: tuple[Instruction, ...]
    params: ExperimentParams
    start_pose: Joints = (0.0, 0.0, 0.0, 0.0)
    # Scene geometry the simulated cell needs: transfer_mm, belt_pick, camera_station.
    layout: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        open_ids: list[int] = []
        seen: set[int] = set()
        for ins in self.instructions:
            if not isinstance(ins, MarkRound):
                continue
            if ins.phase == "begin":
                if ins.round_id in seen:
                    raise ValueError(f"round {ins.round_id} begins twice")
                seen.add(ins.round_id)
                open_ids.append(ins.round_id)
            elif not open_ids or open_ids.pop() != ins.round_id:
                raise ValueError(f"unmatched end marker for round {ins.round_id}")
        if open_ids:
            raise ValueError(f"round {open_ids[-1]} never ends")

    def __len__(self) -> int:
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)


# -- translator -------------------------------------------------------------

@dataclass(frozen=True)
class Step:
    """One workload-level action, e.g. ``Step("pick", {...})``."""

    kind: str
    args: Mapping[str, Any] = field(default_factory=dict)


_REQUIRED = {
    "inject_cube": ("color", "payload_g"),
    "place_cube": ("station", "color", "payload_g"),
    "belt_transfer": ("speed", "seconds"),
    "belt_set": ("on", "speed"),
    "configure": ("settings",),
    "move": ("target", "settings"),
    "pick": ("hover", "target", "settings"),
    "present_to_camera": ("target", "settings"),
    "place": ("hover", "target", "settings"),
    "drop_at": ("target", "settings"),
    "return_home": ("target", "settings"),
    "suction": ("on",),
    "camera_query": (),
    "wait": ("seconds",),
    "begin_round": ("round_id",),
    "end_round": ("round_id",),
}


def _joints(step: Step, key: str) -> Joints:
    value = step.args[key]
    try:
        joints = tuple(float(v) for v in value)
    except TypeError:
        raise ValueError(f"step {step.kind!r}: field {key!r} must be a joint vector") from None
    if len(joints) != N_JOINTS:
        raise ValueError(f"step {step.kind!r}: field {key!r} needs {N_JOINTS} angles")
    return joints  # type: ignore[return-value]


def _settings(step: Step) -> ArmSettings:
    s = step.args["settings"]
    if not isinstance(s, ArmSettings):
        raise ValueError(f"step {step.kind!r}: field 'settings' must be ArmSettings")
    return s


def translate(step: Step) -> list[Instruction]:
    """Expand a workload step into device instructions (pure, fixed templates)."""
    if step.kind not in _REQUIRED:
        raise ValueError(f"unknown step kind {step.kind!r}")
    for key in _REQUIRED[step.kind]:
        if key not in step.args:
            raise ValueError(f"step {step.kind!r}: missing field {key!r}")
    a = step.args
    k = step.kind
    try:
        if k == "inject_cube":
            return [PlaceCube("belt_head", str(a["color"]), float(a["payload_g"]))]
        if k == "place_cube":
            return [PlaceCube(a["station"], str(a["color"]), float(a["payload_g"]))]
        if k == "belt_transfer":
            speed = float(a["speed"])
            return [BeltSet(True, speed), Wait(float(a["seconds"])), BeltSet(False, 0.0)]
        if k == "belt_set":
            return [BeltSet(bool(a["on"]), float(a["speed"]))]
        if k == "configure":
            return [ArmConfigure(_settings(step))]
        if k in ("move", "return_home"):
            return [ArmMoveJoints(_joints(step, "target"), _settings(step))]
        if k in ("pick", "place"):
            s = _settings(step)
            hover, target = _joints(step, "hover"), _joints(step, "target")
            return [ArmMoveJoints(hover, s), ArmMoveJoints(target, s),
                    SuctionSet(k == "pick"), ArmMoveJoints(hover, s)]
        if k == "present_to_camera":
            return [ArmMoveJoints(_joints(step, "target"), _settings(step)), CameraQuery()]
        if k == "drop_at":
            return [ArmMoveJoints(_joints(step, "target"), _settings(step)), SuctionSet(False)]
        if k == "suction":
            return [SuctionSet(bool(a["on"]))]
        if k == "camera_query":
            return [CameraQuery()]
        if k == "wait":
            return [Wait(float(a["seconds"]))]
        phase = "begin" if k == "begin_round" else "end"
        return [MarkRound(phase, int(a["round_id"]))]
    except ValueError as exc:
        if str(exc).startswith("step "):
            raise
        raise ValueError(f"step {k!r}: {exc}") from None


def translate_all(steps, params: ExperimentParams) -> InstructionProgram:
    out: list[Instruction] = []
    for step in steps:
        out.extend(translate(step))
    return InstructionProgram(tuple(out), params)
