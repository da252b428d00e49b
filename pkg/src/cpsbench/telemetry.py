"""Monitoring bus, 1 Hz snapshot joiner and CSV exporter."""

from __future__ import annotations

import bisect
import csv
import logging
import os
import tempfile
import threading
import time
from collections import deque
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Iterable, NamedTuple, Sequence

logger = logging.getLogger(__name__)

JOINT_TOPICS = ("state.j1", "state.j2", "state.j3", "state.j4")
STATE_TOPICS = JOINT_TOPICS + (
    "state.velocity_pct", "state.acceleration_pct", "state.arm_moving",
    "state.suction_on", "state.belt_on", "state.belt_speed_mms",
    "state.camera_detect", "state.payload_g",
)
POWER_TOPICS = ("power.arm", "power.belt", "power.suction", "power.camera")
ROUND_TOPIC = "round.id"
COMMAND_TOPICS = ("command.arm", "command.belt", "command.suction", "command.camera",
                  "command.scene")
ALL_TOPICS = STATE_TOPICS + POWER_TOPICS + (ROUND_TOPIC,) + COMMAND_TOPICS

NO_ROUND = -1
DEFAULT_CAPACITY = 4096


class MetricMessage(NamedTuple):
    topic: str
    timestamp: float
    value: Any


class TopicBus:
    """In-process broker: one logical queue per topic, a single consumer.

    ``publish`` never waits. Past ``capacity`` pending messages the buffer
    keeps growing and the consumer is flagged as lagging.
    """

    def __init__(self, topics: Iterable[str] = ALL_TOPICS, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.topics = frozenset(topics)
        self.capacity = capacity
        self._queue: deque[MetricMessage] = deque()
        self.published = 0
        self.dropped = 0
        self.high_water = 0
        self.lagging = False

    def publish(self, msg: MetricMessage) -> None:
        if msg.topic not in self.topics:
            self.dropped += 1
            logger.warning("dropping message on unregistered topic %r", msg.topic)
            return
        self._queue.append(msg)
        self.published += 1
        pending = len(self._queue)
        if pending > self.high_water:
            self.high_water = pending
            if pending > self.capacity and not self.lagging:
                self.lagging = True
                logger.warning("telemetry consumer lagging: %d messages pending", pending)

    def pending(self) -> int:
        return len(self._queue)

    def drain(self, max_items: int | None = None) -> list[MetricMessage]:
        out = []
        q = self._queue
        while q and (max_items is None or len(out) < max_items):
            out.append(q.popleft())
        return out


class BusConsumer(threading.Thread):
    """Background drain loop feeding ``sink``; ``delay`` simulates a slow consumer."""

    def __init__(self, bus: TopicBus, sink: Callable[[MetricMessage], None],
                 delay: float = 0.0, batch: int = 256):
        super().__init__(daemon=True)
        self.bus = bus
        self.sink = sink
        self.delay = delay
        self.batch = batch
        self._stop_evt = threading.Event()

    def run(self) -> None:
        while True:
            msgs = self.bus.drain(self.batch)
            for m in msgs:
                self.sink(m)
                if self.delay:
                    time.sleep(self.delay)
            if not msgs:
                if self._stop_evt.is_set():
                    return
                time.sleep(0.001)

    def finish(self) -> None:
        """Let the consumer empty the queue, then stop."""
        self._stop_evt.set()
        self.join()


# -- snapshot rows ----------------------------------------------------------

@dataclass(frozen=True)
class SnapshotRow:
    t_s: int
    j1_deg: float
    j2_deg: float
    j3_deg: float
    j4_deg: float
    velocity_pct: int
    acceleration_pct: int
    arm_moving: bool
    suction_on: bool
    belt_on: bool
    belt_speed_mms: float
    camera_detect: bool
    payload_g: float
    plug_arm_w: float
    plug_belt_w: float
    plug_suction_w: float
    system_power_w: float
    round_id: int
    workload_id: str


SNAPSHOT_FIELDS = tuple(f.name for f in fields(SnapshotRow))
_FIELD_TYPES = {f.name: f.type for f in fields(SnapshotRow)}

# Row columns fed to the instantaneous-power model (plug readings excluded:
# their sum is the target).
STATE_FEATURES = ("j1_deg", "j2_deg", "j3_deg", "j4_deg", "velocity_pct",
                  "acceleration_pct", "arm_moving", "suction_on", "belt_on",
                  "belt_speed_mms", "camera_detect", "payload_g")

_TOPIC_TO_FIELD = {
    "state.j1": "j1_deg", "state.j2": "j2_deg", "state.j3": "j3_deg", "state.j4": "j4_deg",
    "state.velocity_pct": "velocity_pct", "state.acceleration_pct": "acceleration_pct",
    "state.arm_moving": "arm_moving", "state.suction_on": "suction_on",
    "state.belt_on": "belt_on", "state.belt_speed_mms": "belt_speed_mms",
    "state.camera_detect": "camera_detect", "state.payload_g": "payload_g",
    "power.arm": "plug_arm_w", "power.belt": "plug_belt_w", "power.suction": "plug_suction_w",
}


def q3(x: float) -> float:
    """Quantize to the exported 3-decimal precision."""
    return round(float(x), 3) + 0.0


class SnapshotJoiner:
    """Collects bus messages per topic and joins them into 1 Hz rows (LVCF)."""

    def __init__(self, workload_id: str = ""):
        self.workload_id = workload_id
        self._series: dict[str, tuple[list[float], list[Any]]] = {}
        self._lock = threading.Lock()

    def add(self, msg: MetricMessage) -> None:
        with self._lock:
            ts, vals = self._series.setdefault(msg.topic, ([], []))
            if ts and msg.timestamp < ts[-1]:
                raise ValueError(f"out-of-order message on {msg.topic}: {msg.timestamp} < {ts[-1]}")
            ts.append(msg.timestamp)
            vals.append(msg.value)

    def add_all(self, msgs: Iterable[MetricMessage]) -> None:
        for m in msgs:
            self.add(m)

    def series(self, topic: str) -> tuple[list[float], list[Any]]:
        return self._series.get(topic, ([], []))

    def _last_at(self, topic: str, t: float, exact: bool = False):
        ts, vals = self._series.get(topic, ([], []))
        i = bisect.bisect_right(ts, t) - 1
        if i < 0:
            return None
        if exact and ts[i] != t:
            return None
        return vals[i]

    def ready(self, t: float) -> bool:
        return all(self._last_at(topic, t) is not None for topic in STATE_TOPICS)

    def join_snapshot(self, t: int) -> SnapshotRow | None:
        """Row for second ``t``; ``None`` until every state topic has a value."""
        if not self.ready(t):
            return None
        values: dict[str, Any] = {}
        for topic, name in _TOPIC_TO_FIELD.items():
            exact = topic.startswith("power.")
            v = self._last_at(topic, t, exact=exact)
            values[name] = 0.0 if v is None else v
        rid = self._last_at(ROUND_TOPIC, t)
        return _make_row(t, values, NO_ROUND if rid is None else rid, self.workload_id)

    def rows(self, n_seconds: int) -> list[SnapshotRow]:
        """Rows for t = 0 .. n_seconds-1, built with one forward sweep per topic."""
        cursors = {topic: 0 for topic in self._series}
        out = []
        current: dict[str, Any] = {}
        for t in range(n_seconds):
            for topic, (ts, vals) in self._series.items():
                i = cursors[topic]
                while i < len(ts) and ts[i] <= t:
                    current[topic] = (ts[i], vals[i])
                    i += 1
                cursors[topic] = i
            if any(topic not in current for topic in STATE_TOPICS):
                continue
            values = {}
            for topic, name in _TOPIC_TO_FIELD.items():
                entry = current.get(topic)
                if topic.startswith("power."):
                    values[name] = entry[1] if entry is not None and entry[0] == t else 0.0
                else:
                    values[name] = entry[1]
            rid = current.get(ROUND_TOPIC)
            out.append(_make_row(t, values, NO_ROUND if rid is None else rid[1], self.workload_id))
        return out


def _make_row(t: int, v: dict[str, Any], round_id: int, workload_id: str) -> SnapshotRow:
    arm, belt, suction = q3(v["plug_arm_w"]), q3(v["plug_belt_w"]), q3(v["plug_suction_w"])
    return SnapshotRow(
        t_s=int(t),
        j1_deg=q3(v["j1_deg"]), j2_deg=q3(v["j2_deg"]),
        j3_deg=q3(v["j3_deg"]), j4_deg=q3(v["j4_deg"]),
        velocity_pct=int(v["velocity_pct"]), acceleration_pct=int(v["acceleration_pct"]),
        arm_moving=bool(v["arm_moving"]), suction_on=bool(v["suction_on"]),
        belt_on=bool(v["belt_on"]), belt_speed_mms=q3(v["belt_speed_mms"]),
        camera_detect=bool(v["camera_detect"]), payload_g=q3(v["payload_g"]),
        plug_arm_w=arm, plug_belt_w=belt, plug_suction_w=suction,
        system_power_w=q3(arm + belt + suction),
        round_id=int(round_id), workload_id=workload_id,
    )


# -- CSV --------------------------------------------------------------------

def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def parse_value(text: str, kind: Any) -> Any:
    if kind in (bool, "bool"):
        if text not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return text == "true"
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return float(text)
    return text


def _atomic_write(path: Path, write: Callable[[Any], None]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_table(path: Path | str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a comma-separated table with the package's value formatting."""
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(v) for v in r])
    _atomic_write(Path(path), write)
    return Path(path)


def read_table(path: Path | str, types: dict[str, Any] | None = None) -> tuple[list[str], list[dict]]:
    """Parse a table written by :func:`write_table`.

    Without ``types`` each cell is read as bool, int or float where it parses,
    falling back to str.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty file, expected a header")
            out = []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(header):
                    raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
                row = {}
                for name, cell in zip(header, rec):
                    kind = types.get(name) if types else None
                    row[name] = parse_value(cell, kind) if kind else _guess(cell)
                out.append(row)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    return header, out


def _guess(cell: str) -> Any:
    if cell in ("true", "false"):
        return cell == "true"
    for kind in (int, float):
        try:
            return kind(cell)
        except ValueError:
            pass
    return cell


def export_csv(rows: Sequence[SnapshotRow], path: Path | str) -> Path:
    return write_table(path, SNAPSHOT_FIELDS, (astuple(r) for r in rows))


def read_snapshots(path: Path | str) -> list[SnapshotRow]:
    header, recs = read_table(path, types=_FIELD_TYPES)
    if tuple(header) != SNAPSHOT_FIELDS:
        missing = [f for f in SNAPSHOT_FIELDS if f not in header]
        bad = missing[0] if missing else next(h for h, f in zip(header, SNAPSHOT_FIELDS) if h != f)
        raise ValueError(f"{path}: snapshot schema mismatch at column {bad!r}")
    return [SnapshotRow(**r) for r in recs]
