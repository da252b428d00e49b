"""Motion timing and power model of the simulated sorting cell.

Everything here is deterministic except :class:`PowerSampler`, which layers
seeded measurement noise on top of :func:`mean_power`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

N_JOINTS = 4
BELT_SPEED_MAX = 80.0
PAYLOAD_MAX_G = 730.0

ARM_IDLE_W = 16.0
ARM_MOVING_W = 16.5
SUCTION_W = 6.0
CAMERA_BASE_W = 1.5
CAMERA_DETECT_W = 2.13

# (speed mm/s, added watts); linear in between.
BELT_ANCHORS = (
    (0.0, 0.0),
    (10.0, 1.5),
    (20.0, 2.5),
    (30.0, 3.5),
    (40.0, 3.5),
    (50.0, 2.5),
    (60.0, 1.0),
    (70.0, 1.0),
    (80.0, 1.0),
)


class UnreachableMotionError(ValueError):
    """A non-zero displacement was requested with a zero velocity/acceleration setting."""


def _check_pct(name: str, value: int) -> None:
    if not 0 <= value <= 100:
        raise ValueError(f"{name} must be within 0..100, got {value}")


@dataclass(frozen=True)
class ArmSettings:
    velocity_pct: int = 50
    acceleration_pct: int = 50

    def __post_init__(self) -> None:
        _check_pct("velocity_pct", self.velocity_pct)
        _check_pct("acceleration_pct", self.acceleration_pct)


@dataclass(frozen=True)
class MotionLimits:
    max_joint_speed: float = 320.0  # deg/s
    max_joint_accel: float = 640.0  # deg/s^2

    def __post_init__(self) -> None:
        if self.max_joint_speed <= 0 or self.max_joint_accel <= 0:
            raise ValueError("motion limits must be strictly positive")


DEFAULT_LIMITS = MotionLimits()


@dataclass(frozen=True)
class CellState:
    """Instantaneous state of the cell, as the sensors would report it."""

    joint_angles: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    arm_moving: bool = False
    settings: ArmSettings = field(default_factory=ArmSettings)
    suction_on: bool = False
    belt_on: bool = False
    belt_speed: float = 0.0
    camera_detect: bool = False
    payload_g: float = 0.0

    def __post_init__(self) -> None:
        if len(self.joint_angles) != N_JOINTS:
            raise ValueError(f"expected {N_JOINTS} joint angles")
        if not 0.0 <= self.belt_speed <= BELT_SPEED_MAX:
            raise ValueError(f"belt_speed {self.belt_speed} outside [0, {BELT_SPEED_MAX}]")
        if (self.belt_speed == 0.0) == self.belt_on:
            raise ValueError("belt_speed must be 0 exactly when the belt is off")
        if not 0.0 <= self.payload_g <= PAYLOAD_MAX_G:
            raise ValueError(f"payload_g {self.payload_g} outside [0, {PAYLOAD_MAX_G}]")

    def evolve(self, **changes) -> CellState:
        return replace(self, **changes)


@dataclass(frozen=True)
class PowerBreakdown:
    arm_w: float
    belt_w: float
    suction_w: float
    camera_w: float

    @property
    def system_total_w(self) -> float:
        # The camera sits on a USB hub and is left out of the system figure.
        return self.arm_w + self.belt_w + self.suction_w


@dataclass(frozen=True)
class TrapezoidProfile:
    """Single-axis rest-to-rest profile; triangular when ``cruise_time`` is 0."""

    distance: float
    peak_speed: float
    accel: float
    ramp_time: float
    cruise_time: float

    @property
    def duration(self) -> float:
        return 2.0 * self.ramp_time + self.cruise_time

    def position(self, t: float) -> float:
        """Distance covered ``t`` seconds after the start of the move."""
        if t <= 0.0 or self.distance == 0.0:
            return 0.0
        if t >= self.duration:
            return self.distance
        a, tr, v = self.accel, self.ramp_time, self.peak_speed
        if t < tr:
            return 0.5 * a * t * t
        if t < tr + self.cruise_time:
            return 0.5 * a * tr * tr + v * (t - tr)
        left = self.duration - t
        return self.distance - 0.5 * a * left * left


def plan_move(distance_deg: float, settings: ArmSettings,
              limits: MotionLimits = DEFAULT_LIMITS) -> TrapezoidProfile:
    if distance_deg < 0:
        raise ValueError(f"distance must be >= 0, got {distance_deg}")
    if distance_deg == 0:
        return TrapezoidProfile(0.0, 0.0, 0.0, 0.0, 0.0)
    if settings.velocity_pct == 0 or settings.acceleration_pct == 0:
        raise UnreachableMotionError(
            f"unreachable motion: {distance_deg} deg at velocity "
            f"{settings.velocity_pct}%, acceleration {settings.acceleration_pct}%")
    v = settings.velocity_pct / 100.0 * limits.max_joint_speed
    a = settings.acceleration_pct / 100.0 * limits.max_joint_accel
    if v * v / a >= distance_deg:
        ramp = math.sqrt(distance_deg / a)
        return TrapezoidProfile(distance_deg, a * ramp, a, ramp, 0.0)
    ramp = v / a
    return TrapezoidProfile(distance_deg, v, a, ramp, distance_deg / v - ramp)


def move_duration(distance_deg: float, settings: ArmSettings,
                  limits: MotionLimits = DEFAULT_LIMITS) -> float:
    """Seconds needed to travel ``distance_deg`` from rest to rest."""
    return plan_move(distance_deg, settings, limits).duration


def joint_move_duration(start: Sequence[float], target: Sequence[float],
                        settings: ArmSettings,
                        limits: MotionLimits = DEFAULT_LIMITS) -> float:
    """Duration of a synchronized multi-joint move: the slowest joint wins."""
    return max(move_duration(abs(b - a), settings, limits) for a, b in zip(start, target))


def belt_delta(speed: float) -> float:
    """Extra watts drawn by the belt motor at ``speed`` mm/s."""
    if not 0.0 <= speed <= BELT_SPEED_MAX:
        raise ValueError(f"belt speed {speed} outside [0, {BELT_SPEED_MAX}]")
    xs, ys = zip(*BELT_ANCHORS)
    return float(np.interp(speed, xs, ys))


def mean_power(state: CellState) -> PowerBreakdown:
    return PowerBreakdown(
        arm_w=ARM_MOVING_W if state.arm_moving else ARM_IDLE_W,
        belt_w=belt_delta(state.belt_speed) if state.belt_on else 0.0,
        suction_w=SUCTION_W if state.suction_on else 0.0,
        camera_w=CAMERA_BASE_W + (CAMERA_DETECT_W if state.camera_detect else 0.0),
    )


def energy_of_series(powers: Sequence[float], dt: float) -> float:
    """Left Riemann sum of a power series sampled every ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return float(math.fsum(powers)) * dt


@dataclass(frozen=True)
class NoiseModel:
    sigma_arm: float = 0.8
    sigma_belt: float = 0.3
    sigma_suction: float = 0.4
    spike_low: float = 2.0
    spike_high: float = 3.5
    spike_idle_s: float = 5.0
    spike_samples: int = 2


QUIET = NoiseModel(0.0, 0.0, 0.0, 0.0, 0.0, math.inf, 0)


class PowerSampler:
    """Seeded plug-reading generator.

    Noise is added only to powered components; an unpowered belt or pump
    reads 0 W. After at least ``spike_idle_s`` with neither the arm moving
    nor the pump on, the next ``spike_samples`` readings of whichever
    component switched on carry an inrush spike.

    One instance per simulated cell; not safe to share between threads.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0,
                 noise: NoiseModel = NoiseModel()):
        self.noise = noise
        self._rng = np.random.default_rng(seed)
        self._active = False
        self._idle_since = 0.0
        self._spike_left = 0
        self._spike_device = "arm"

    def observe(self, t: float, state: CellState) -> None:
        """Track activity transitions; call on every state change."""
        active = state.arm_moving or state.suction_on
        if active and not self._active:
            if t - self._idle_since >= self.noise.spike_idle_s:
                self._spike_left = self.noise.spike_samples
                self._spike_device = "arm" if state.arm_moving else "suction"
        elif self._active and not active:
            self._idle_since = t
        self._active = active

    def sample(self, state: CellState, t: float | None = None) -> PowerBreakdown:
        if t is not None:
            self.observe(t, state)
        base = mean_power(state)
        n = self.noise
        z = self._rng.standard_normal(3)
        arm = base.arm_w + n.sigma_arm * z[0]
        belt = base.belt_w + n.sigma_belt * z[1] if state.belt_on else 0.0
        suction = base.suction_w + n.sigma_suction * z[2] if state.suction_on else 0.0
        if self._spike_left > 0:
            bump = self._rng.uniform(n.spike_low, n.spike_high)
            if self._spike_device == "arm":
                arm += bump
            else:
                suction += bump
            self._spike_left -= 1
        return PowerBreakdown(max(arm, 0.0), max(belt, 0.0), max(suction, 0.0), base.camera_w)


def sample_power(state: CellState, sampler: PowerSampler, t: float | None = None) -> PowerBreakdown:
    return sampler.sample(state, t)
