"""Sensor and actuator adapters.

The abstract classes are the contract the controller programs against; the
``Sim*`` classes implement it on top of a :class:`SimulatedCell`. A hardware
backend would subclass the same interfaces.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Mapping, NamedTuple

from . import powerkin as pk
from .powerkin import ArmSettings, CellState, MotionLimits, PowerBreakdown, PowerSampler

DEVICES = ("arm", "belt", "suction", "camera", "plug")
PLUG_CHANNELS = ("arm", "belt", "suction", "camera")
COLORS = ("red", "green", "blue", "yellow")

Joints = tuple[float, float, float, float]


@dataclass(frozen=True)
class AdapterEvent:
    timestamp: float
    device: str
    payload: Mapping[str, Any]
    accepted: bool = True

    def as_record(self) -> dict:
        return {"t": round(self.timestamp, 9), "device": self.device,
                "accepted": self.accepted, **self.payload}


class Detection(NamedTuple):
    detected: bool
    color: str


class VirtualClock:
    """Monotonic virtual time in seconds."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    @property
    def now(self) -> float:
        return self._now

    def advance_to(self, t: float) -> None:
        if t < self._now:
            raise ValueError(f"virtual time cannot go backwards ({t} < {self._now})")
        self._now = float(t)


# -- interfaces -------------------------------------------------------------

class ArmAdapter(ABC):
    @abstractmethod
    def configure(self, settings: ArmSettings) -> None: ...

    @abstractmethod
    def move_joints(self, target: Joints, settings: ArmSettings) -> float:
        """Start a joint move; return the virtual completion time."""


class BeltAdapter(ABC):
    @abstractmethod
    def set(self, on: bool, speed: float = 0.0) -> AdapterEvent: ...


class SuctionAdapter(ABC):
    @abstractmethod
    def set(self, on: bool) -> AdapterEvent: ...


class CameraAdapter(ABC):
    latency_s: float

    @abstractmethod
    def query(self) -> Detection: ...


class PlugAdapter(ABC):
    @abstractmethod
    def read(self, device: str) -> float: ...


# -- simulated backend ------------------------------------------------------

@dataclass(frozen=True)
class CellConfig:
    joint_limit_deg: float = 135.0
    camera_latency_s: float = 1.0
    belt_speed_range: tuple[float, float] = (10.0, 80.0)
    limits: MotionLimits = pk.DEFAULT_LIMITS
    transfer_mm: float = 200.0
    # Named joint targets the scene bookkeeping needs to recognise.
    belt_pick: Joints = (-135.0, 40.0, 40.0, 0.0)
    camera_station: Joints = (135.0, 10.0, 10.0, 0.0)


@dataclass
class _Motion:
    start_t: float
    start: Joints
    target: Joints
    profile: pk.TrapezoidProfile  # of the longest joint

    @property
    def end_t(self) -> float:
        return self.start_t + self.profile.duration

    def joints_at(self, t: float) -> Joints:
        p = self.profile
        frac = 1.0 if p.distance == 0 else p.position(t - self.start_t) / p.distance
        return tuple(a + (b - a) * frac for a, b in zip(self.start, self.target))  # type: ignore[return-value]


@dataclass
class _Cube:
    color: str
    payload_g: float
    location: str  # belt | held | camera_station | belt_pick | bucket
    belt_mm: float = 0.0


def _same_pose(a, b, tol: float = 1e-6) -> bool:
    return all(abs(x - y) <= tol for x, y in zip(a, b))


class SimulatedCell:
    """Shared state behind the simulated adapters.

    All mutation goes through the controller's single timeline; listeners are
    called as ``listener(t, old_state, new_state)`` after each change.
    """

    def __init__(self, config: CellConfig = CellConfig(), sampler: PowerSampler | None = None,
                 initial: CellState | None = None, clock: VirtualClock | None = None):
        self.config = config
        self.clock = clock or VirtualClock()
        self.sampler = sampler or PowerSampler(0)
        self.state = initial or CellState()
        self.events: list[AdapterEvent] = []
        self.listeners: list[Callable[[float, CellState, CellState], None]] = []
        self.motion: _Motion | None = None
        self.cube: _Cube | None = None
        self.delivered: list[tuple[str, Joints]] = []
        self._last_belt_t = self.clock.now
        self._sample_cache: tuple[float, PowerBreakdown] | None = None
        self.sampler.observe(self.clock.now, self.state)

        self.arm = SimArm(self)
        self.belt = SimBelt(self)
        self.suction = SimSuction(self)
        self.camera = SimCamera(self)
        self.plug = SimPlug(self)

    @property
    def now(self) -> float:
        return self.clock.now

    def log(self, device: str, payload: dict, accepted: bool = True) -> AdapterEvent:
        ev = AdapterEvent(self.now, device, payload, accepted)
        self.events.append(ev)
        return ev

    def set_state(self, **changes) -> None:
        new = self.state.evolve(**changes)
        if new == self.state:
            return
        old, self.state = self.state, new
        self._sample_cache = None
        self.sampler.observe(self.now, new)
        for fn in self.listeners:
            fn(self.now, old, new)

    # time evolution ------------------------------------------------------
    def advance(self, t: float) -> None:
        """Move virtual time to ``t``, finishing any motion that ends by then."""
        if self.motion is not None and self.motion.end_t <= t:
            self._move_belt(self.motion.end_t)
            self.clock.advance_to(self.motion.end_t)
            target = self.motion.target
            self.motion = None
            self.set_state(joint_angles=target, arm_moving=False)
        self._move_belt(t)
        self.clock.advance_to(t)

    def joints_now(self) -> Joints:
        if self.motion is None:
            return self.state.joint_angles
        return self.motion.joints_at(self.now)

    def _move_belt(self, t: float) -> None:
        dt = t - self._last_belt_t
        self._last_belt_t = max(self._last_belt_t, t)
        c = self.cube
        if c is None or c.location != "belt" or not self.state.belt_on or dt <= 0:
            return
        c.belt_mm = min(self.config.transfer_mm, c.belt_mm + self.state.belt_speed * dt)
        if c.belt_mm >= self.config.transfer_mm - 1e-9:
            c.location = "belt_pick"

    # scene ----------------------------------------------------------------
    def place_cube(self, station: str | None, color: str, payload_g: float) -> None:
        """Operator action (not a device command, so no adapter event)."""
        if station is None:
            self.cube = None
            self.set_state(payload_g=0.0, camera_detect=False)
            return
        if station not in ("belt_head", "belt_pick", "camera_station"):
            raise ValueError(f"unknown cube station {station!r}")
        loc = "belt" if station == "belt_head" else station
        self.cube = _Cube(color, float(payload_g), loc)
        self.set_state(payload_g=float(payload_g))

    def cube_at_camera(self) -> _Cube | None:
        c = self.cube
        if c is None:
            return None
        if c.location == "camera_station":
            return c
        if c.location == "held" and self.motion is None and _same_pose(
                self.state.joint_angles, self.config.camera_station):
            return c
        return None

    # power ----------------------------------------------------------------
    def sample(self) -> PowerBreakdown:
        """One plug sample per virtual instant and state; repeated calls reuse it."""
        if self._sample_cache is not None and self._sample_cache[0] == self.now:
            return self._sample_cache[1]
        state = self.state
        if self.motion is not None:
            state = state.evolve(joint_angles=self.joints_now())
        b = self.sampler.sample(state, self.now)
        self._sample_cache = (self.now, b)
        return b


class SimArm(ArmAdapter):
    def __init__(self, cell: SimulatedCell):
        self.cell = cell

    def configure(self, settings: ArmSettings) -> None:
        self.cell.log("arm", {"cmd": "configure", "velocity_pct": settings.velocity_pct,
                              "acceleration_pct": settings.acceleration_pct})
        self.cell.set_state(settings=settings)

    def move_joints(self, target: Joints, settings: ArmSettings) -> float:
        cell = self.cell
        payload = {"cmd": "move_joints", "target": [round(x, 6) for x in target],
                   "velocity_pct": settings.velocity_pct,
                   "acceleration_pct": settings.acceleration_pct}
        if cell.motion is not None:
            return self._reject(payload, "arm is already moving")
        lim = cell.config.joint_limit_deg
        if any(abs(x) > lim for x in target):
            return self._reject(payload, f"target outside joint limits +/-{lim:g} deg")
        start = cell.state.joint_angles
        dists = [abs(b - a) for a, b in zip(start, target)]
        try:
            profile = pk.plan_move(max(dists), settings, cell.config.limits)
        except pk.UnreachableMotionError as exc:
            return self._reject(payload, str(exc))
        payload["duration_s"] = round(profile.duration, 9)
        cell.log("arm", payload)
        if profile.duration == 0:
            cell.set_state(settings=settings)
            return cell.now
        cell.motion = _Motion(cell.now, start, tuple(float(x) for x in target), profile)
        if cell.cube is not None and cell.cube.location == "held":
            cell.set_state(settings=settings, arm_moving=True, camera_detect=False)
        else:
            cell.set_state(settings=settings, arm_moving=True)
        return cell.motion.end_t

    def _reject(self, payload: dict, reason: str) -> float:
        self.cell.log("arm", {**payload, "error": reason}, accepted=False)
        return self.cell.now


class SimBelt(BeltAdapter):
    def __init__(self, cell: SimulatedCell):
        self.cell = cell

    def set(self, on: bool, speed: float = 0.0) -> AdapterEvent:
        cell = self.cell
        payload = {"cmd": "set", "on": on, "speed": speed}
        lo, hi = cell.config.belt_speed_range
        if on and not lo <= speed <= hi:
            return cell.log("belt", {**payload, "error": f"speed {speed:g} outside {lo:g}-{hi:g} mm/s"},
                            accepted=False)
        if not on and speed != 0:
            return cell.log("belt", {**payload, "error": "speed must be 0 when off"}, accepted=False)
        ev = cell.log("belt", payload)
        cell.set_state(belt_on=on, belt_speed=float(speed) if on else 0.0)
        return ev


class SimSuction(SuctionAdapter):
    def __init__(self, cell: SimulatedCell):
        self.cell = cell

    def set(self, on: bool) -> AdapterEvent:
        cell = self.cell
        ev = cell.log("suction", {"cmd": "set", "on": on})
        if on == cell.state.suction_on:
            return ev
        c = cell.cube
        if on:
            if c is not None and c.location in ("belt_pick", "camera_station") and cell.motion is None:
                pick = cell.config.belt_pick if c.location == "belt_pick" else cell.config.camera_station
                if _same_pose(cell.state.joint_angles, pick):
                    c.location = "held"
            cell.set_state(suction_on=True)
        else:
            if c is not None and c.location == "held":
                cell.delivered.append((c.color, cell.joints_now()))
                cell.cube = None
                cell.set_state(suction_on=False, payload_g=0.0)
            else:
                cell.set_state(suction_on=False)
        return ev


class SimCamera(CameraAdapter):
    def __init__(self, cell: SimulatedCell):
        self.cell = cell
        self.latency_s = cell.config.camera_latency_s

    def query(self) -> Detection:
        cell = self.cell
        c = cell.cube_at_camera()
        if c is None:
            det = Detection(False, "none")
        else:
            det = Detection(True, c.color if c.color in COLORS else "none")
        cell.log("camera", {"cmd": "query", "detected": det.detected, "color": det.color})
        cell.set_state(camera_detect=det.detected)
        return det


class SimPlug(PlugAdapter):
    def __init__(self, cell: SimulatedCell):
        self.cell = cell

    def read(self, device: str) -> float:
        if device not in PLUG_CHANNELS:
            raise KeyError(f"unknown plug device {device!r}; expected one of {PLUG_CHANNELS}")
        b = self.cell.sample()
        w = getattr(b, f"{device}_w")
        self.cell.log("plug", {"cmd": "read", "device": device, "w": round(w, 3)})
        return w

    def read_all(self) -> PowerBreakdown:
        b = self.cell.sample()
        self.cell.log("plug", {"cmd": "read_all", "arm": round(b.arm_w, 3), "belt": round(b.belt_w, 3),
                               "suction": round(b.suction_w, 3), "camera": round(b.camera_w, 3)})
        return b
