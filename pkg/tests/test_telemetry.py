import logging
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsbench.telemetry import (
    NO_ROUND,
    POWER_TOPICS,
    ROUND_TOPIC,
    SNAPSHOT_FIELDS,
    STATE_TOPICS,
    BusConsumer,
    MetricMessage,
    SnapshotJoiner,
    SnapshotRow,
    TopicBus,
    export_csv,
    read_snapshots,
    read_table,
    write_table,
)

INITIAL = {"state.j1": 0.0, "state.j2": 0.0, "state.j3": 0.0, "state.j4": 0.0,
           "state.velocity_pct": 50, "state.acceleration_pct": 50, "state.arm_moving": False,
           "state.suction_on": False, "state.belt_on": False, "state.belt_speed_mms": 0.0,
           "state.camera_detect": False, "state.payload_g": 0.0}


def seeded_joiner():
    j = SnapshotJoiner("sorting")
    j.add_all(MetricMessage(t, 0.0, v) for t, v in INITIAL.items())
    return j


def test_bus_never_blocks_and_flags_lag(caplog):
    bus = TopicBus(capacity=8)
    with caplog.at_level(logging.WARNING):
        for i in range(20):
            bus.publish(MetricMessage("power.arm", float(i), 16.0))
    assert bus.pending() == 20
    assert bus.lagging and bus.high_water == 20
    assert "lagging" in caplog.text
    assert len(bus.drain(5)) == 5


def test_unknown_topic_dropped():
    bus = TopicBus()
    bus.publish(MetricMessage("nope", 0.0, 1))
    assert bus.dropped == 1 and bus.pending() == 0


def test_slow_consumer_does_not_slow_publisher():
    bus = TopicBus()
    got = []
    c = BusConsumer(bus, got.append, delay=0.001)
    c.start()
    t0 = time.perf_counter()
    for i in range(500):
        bus.publish(MetricMessage("power.arm", float(i), 1.0))
    publish_time = time.perf_counter() - t0
    c.finish()
    assert len(got) == 500
    assert publish_time < 0.25


def test_lvcf_join():
    j = seeded_joiner()
    j.add(MetricMessage("state.suction_on", 2.5, True))
    j.add(MetricMessage("power.arm", 3.0, 16.4))
    j.add(MetricMessage("power.suction", 3.0, 6.1))
    j.add(MetricMessage(ROUND_TOPIC, 1.0, 4))
    r2 = j.join_snapshot(2)
    r3 = j.join_snapshot(3)
    assert r2.suction_on is False and r3.suction_on is True
    assert r2.plug_arm_w == 0.0  # power is never carried forward
    assert r3.system_power_w == 22.5
    assert r3.round_id == 4
    assert j.rows(4) == [j.join_snapshot(t) for t in range(4)]


def test_join_waits_for_all_state_topics():
    j = SnapshotJoiner()
    j.add(MetricMessage("state.j1", 0.0, 1.0))
    assert j.join_snapshot(0) is None
    assert j.rows(3) == []


def test_out_of_order_rejected():
    j = SnapshotJoiner()
    j.add(MetricMessage("power.arm", 2.0, 1.0))
    with pytest.raises(ValueError):
        j.add(MetricMessage("power.arm", 1.0, 1.0))


def test_default_round_id():
    assert seeded_joiner().join_snapshot(0).round_id == NO_ROUND


finite = st.floats(-1e4, 1e4, allow_nan=False)


@st.composite
def rows(draw):
    q = lambda x: round(x, 3) + 0.0
    arm, belt, suc = (q(draw(st.floats(0, 40))) for _ in range(3))
    return SnapshotRow(
        t_s=draw(st.integers(0, 10**6)),
        j1_deg=q(draw(finite)), j2_deg=q(draw(finite)), j3_deg=q(draw(finite)), j4_deg=q(draw(finite)),
        velocity_pct=draw(st.integers(0, 100)), acceleration_pct=draw(st.integers(0, 100)),
        arm_moving=draw(st.booleans()), suction_on=draw(st.booleans()), belt_on=draw(st.booleans()),
        belt_speed_mms=q(draw(st.floats(0, 80))), camera_detect=draw(st.booleans()),
        payload_g=q(draw(st.sampled_from([0, 195, 340, 535, 730]))),
        plug_arm_w=arm, plug_belt_w=belt, plug_suction_w=suc, system_power_w=q(arm + belt + suc),
        round_id=draw(st.integers(-1, 1000)), workload_id=draw(st.sampled_from(["sorting", "belt_sweep"])))


@settings(max_examples=50, deadline=None)
@given(st.lists(rows(), max_size=20))
def test_csv_round_trip(tmp_path_factory, rs):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    export_csv(rs, path)
    assert read_snapshots(path) == rs


def test_csv_format(tmp_path):
    j = seeded_joiner()
    j.add(MetricMessage("power.arm", 0.0, 16.12345))
    export_csv(j.rows(1), tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == ",".join(SNAPSHOT_FIELDS)
    assert "16.123" in lines[1] and "false" in lines[1]


def test_schema_mismatch_names_column(tmp_path):
    write_table(tmp_path / "bad.csv", ("t_s", "oops"), [(1, 2)])
    with pytest.raises(ValueError, match="j1_deg"):
        read_snapshots(tmp_path / "bad.csv")


def test_table_guessing(tmp_path):
    write_table(tmp_path / "x.csv", ("a", "b", "c", "d"), [(1, 2.5, True, "x")])
    _, recs = read_table(tmp_path / "x.csv")
    assert recs == [{"a": 1, "b": 2.5, "c": True, "d": "x"}]


def test_write_error_has_context(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="cannot write"):
        write_table(blocker / "sub" / "x.csv", ("a",), [])


def test_topic_sets():
    assert len(STATE_TOPICS) == 12 and len(POWER_TOPICS) == 4
