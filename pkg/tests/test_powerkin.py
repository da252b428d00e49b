import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpsbench import powerkin as pk
from cpsbench.powerkin import ArmSettings, CellState


def test_trapezoid_duration_by_hand():
    # 50 %: v = 160 deg/s, a = 320 deg/s^2, so the cruise phase exists beyond 80 deg.
    s = ArmSettings(50, 50)
    assert pk.move_duration(225, s) == pytest.approx(160 / 320 + 225 / 160)
    assert pk.move_duration(80, s) == pytest.approx(2 * math.sqrt(80 / 320))
    assert pk.move_duration(40, s) == pytest.approx(2 * math.sqrt(40 / 320))


def test_full_settings_duration():
    # v = 320, a = 640, v^2/a = 160: a 90 deg move is triangular.
    assert pk.move_duration(90, ArmSettings(100, 100)) == pytest.approx(2 * math.sqrt(90 / 640))
    assert pk.move_duration(270, ArmSettings(100, 100)) == pytest.approx(0.5 + 270 / 320)


def test_joint_move_takes_slowest_joint():
    s = ArmSettings(50, 50)
    d = pk.joint_move_duration((0, 0, 0, 0), (90, 30, -200, 0), s)
    assert d == pytest.approx(pk.move_duration(200, s))


def test_zero_distance_and_unreachable():
    assert pk.move_duration(0, ArmSettings(0, 0)) == 0
    with pytest.raises(pk.UnreachableMotionError):
        pk.move_duration(10, ArmSettings(0, 50))
    with pytest.raises(pk.UnreachableMotionError):
        pk.move_duration(10, ArmSettings(50, 0))
    with pytest.raises(ValueError):
        pk.move_duration(-1, ArmSettings())


def test_settings_range():
    with pytest.raises(ValueError, match="velocity_pct"):
        ArmSettings(101, 50)


@given(d=st.floats(0.01, 500), v=st.integers(1, 100), a=st.integers(1, 100))
def test_profile_reaches_distance_monotonically(d, v, a):
    prof = pk.plan_move(d, ArmSettings(v, a))
    ts = np.linspace(0, prof.duration, 25)
    pos = [prof.position(t) for t in ts]
    assert pos[0] == 0
    assert pos[-1] == pytest.approx(d)
    assert all(b >= a_ - 1e-9 for a_, b in zip(pos, pos[1:]))
    assert prof.peak_speed <= v / 100 * 320 + 1e-9


@given(d=st.floats(0.1, 500), v=st.integers(1, 99), a=st.integers(1, 100))
def test_duration_non_increasing_in_velocity(d, v, a):
    assert pk.move_duration(d, ArmSettings(v + 1, a)) <= pk.move_duration(d, ArmSettings(v, a)) + 1e-12


@given(d=st.floats(0.1, 500), v=st.integers(1, 100), a=st.integers(1, 99))
def test_duration_non_increasing_in_acceleration(d, v, a):
    assert pk.move_duration(d, ArmSettings(v, a + 1)) <= pk.move_duration(d, ArmSettings(v, a)) + 1e-12


def test_profile_continuous_at_triangle_boundary():
    s = ArmSettings(50, 50)  # boundary at 80 deg
    assert pk.move_duration(80 - 1e-9, s) == pytest.approx(pk.move_duration(80 + 1e-9, s))


def test_mean_power_constants():
    idle = pk.mean_power(CellState())
    assert idle.system_total_w == 16.0
    assert idle.camera_w == 1.5
    pump = pk.mean_power(CellState(suction_on=True))
    assert pump.system_total_w == 22.0
    det = pk.mean_power(CellState(camera_detect=True))
    assert det.camera_w - idle.camera_w == pytest.approx(2.13)
    assert det.system_total_w == 16.0  # camera left out of the total
    assert pk.mean_power(CellState(arm_moving=True)).arm_w == 16.5


@pytest.mark.parametrize("speed,watts", [(0, 0), (10, 1.5), (25, 3.0), (35, 3.5), (55, 1.75), (80, 1.0)])
def test_belt_interpolation(speed, watts):
    assert pk.belt_delta(speed) == pytest.approx(watts)


def test_belt_domain():
    with pytest.raises(ValueError):
        pk.belt_delta(81)
    with pytest.raises(ValueError):
        CellState(belt_on=True, belt_speed=0.0)


def test_energy_of_series():
    assert pk.energy_of_series([16.0] * 10, 1.0) == 160.0
    with pytest.raises(ValueError):
        pk.energy_of_series([1.0], 0)


def test_sampler_seeded_and_unpowered_components_read_zero():
    a = pk.PowerSampler(3)
    b = pk.PowerSampler(3)
    st_ = CellState()
    xs = [a.sample(st_, t) for t in range(20)]
    ys = [b.sample(st_, t) for t in range(20)]
    assert xs == ys
    assert all(x.belt_w == 0 and x.suction_w == 0 for x in xs)


def test_noise_statistics():
    s = pk.PowerSampler(0)
    vals = np.array([s.sample(CellState(suction_on=True)).suction_w for _ in range(4000)])
    # First two readings after the long idle carry the start-up spike; drop them.
    vals = vals[2:]
    assert abs(vals.mean() - 6.0) < 0.05
    assert abs(vals.std() - 0.4) < 0.03


def test_spike_after_idle():
    s = pk.PowerSampler(0, pk.NoiseModel(0, 0, 0))
    idle = CellState()
    on = CellState(suction_on=True)
    for t in range(6):
        s.sample(idle, t)
    first = s.sample(on, 6)
    second = s.sample(on, 7)
    third = s.sample(on, 8)
    assert 2.0 <= first.suction_w - 6.0 <= 3.5
    assert 2.0 <= second.suction_w - 6.0 <= 3.5
    assert third.suction_w == 6.0


def test_no_spike_after_short_idle():
    s = pk.PowerSampler(0, pk.NoiseModel(0, 0, 0))
    s.observe(0, CellState(arm_moving=True))
    s.observe(1, CellState())
    assert s.sample(CellState(arm_moving=True), 3).arm_w == 16.5
