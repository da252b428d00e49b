import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import box_reference

from cpsbench.analysis import (
    TrialData,
    box_summary,
    build_figures,
    emit_plots,
    group_by_config,
    throughput_curves,
)
from cpsbench.control import run_params
from cpsbench.program import ExperimentParams
from cpsbench.telemetry import read_table
from cpsbench.workloads import RoundRecord


def test_box_summary_example():
    b = box_summary([1, 2, 3, 4, 100])
    assert b.median == 3 and b.q1 == 2 and b.q3 == 4
    assert b.outliers == (100.0,)
    assert b.whisker_high == 4 and b.whisker_low == 1


def test_box_constant_and_symmetric():
    b = box_summary([5.0] * 7)
    assert b.iqr == 0 and b.outliers == ()
    sym = [-3, -1, 0, 1, 3]
    assert box_summary(sym).median == np.mean(sym)


def test_box_empty():
    with pytest.raises(ValueError):
        box_summary([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=1000))
def test_box_matches_reference(vals):
    got = box_summary(vals)
    ref = box_reference(vals)
    for k in ("median", "q1", "q3", "iqr", "whisker_low", "whisker_high"):
        assert getattr(got, k) == pytest.approx(ref[k], rel=1e-9, abs=1e-6)
    assert list(got.outliers) == pytest.approx(ref["outliers"])
    assert got.q1 <= got.median <= got.q3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=100), st.randoms())
def test_box_permutation_invariant(vals, rnd):
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    assert box_summary(vals) == box_summary(shuffled)


@pytest.fixture(scope="module")
def belt_trials():
    out = []
    for i, v in enumerate(range(0, 81, 10)):
        p = ExperimentParams("belt_sweep", belt_speed=float(v), grid=(v,), dwell_s=60, seed=i)
        log = run_params(p)
        out.append(TrialData(p, log.rows, log.rounds))
    return out


def test_group_by_belt(belt_trials):
    groups = group_by_config(belt_trials, "belt_speed")
    assert list(groups) == [float(v) for v in range(0, 81, 10)]
    medians = {k: g.median for k, g in groups.items()}
    assert max(medians, key=medians.get) in (30.0, 40.0)


def test_group_permutation_invariant(belt_trials):
    a = group_by_config(belt_trials, "belt_speed")
    b = group_by_config(belt_trials[::-1], "belt_speed")
    assert a == b


def test_group_rows_fallback_and_errors(belt_trials):
    rows = [r for t in belt_trials[:1] for r in t.rows]
    assert list(group_by_config(rows, "belt_speed")) == [0.0]
    with pytest.raises(ValueError, match="unknown group key"):
        group_by_config(belt_trials, "colour")


def _rec(v, dur, energy, peak=23.0):
    return RoundRecord("e", "sorting", 0, v, 50, 40.0, 0.0, dur, energy / dur, peak, energy, 60 / dur)


def test_throughput_curves_sorted_and_averaged():
    recs = [_rec(30, 20, 400), _rec(100, 10, 250), _rec(100, 12, 270), _rec(60, 15, 300)]
    curve = throughput_curves(recs)
    assert [c.velocity_pct for c in curve] == [30, 60, 100]
    assert curve[-1].n_rounds == 2 and curve[-1].energy_j == 260
    assert len(throughput_curves(recs[:1])) == 1


def test_emit_plots_deterministic(tmp_path, belt_trials, caplog):
    app = run_params(ExperimentParams("sorting", rounds=3, seed=4))
    trials = belt_trials + [TrialData(app.params, app.rows, app.rounds)]
    figs = build_figures(trials)
    with caplog.at_level(logging.WARNING):
        a = emit_plots(figs, tmp_path / "a")
        b = emit_plots(build_figures(trials), tmp_path / "b")
    assert "fig_velocity_power has no data" in caplog.text
    names = sorted(p.name for p in a)
    assert "fig_belt_power.svg" in names and "fig_throughput.csv" in names
    for pa, pb in zip(sorted(a), sorted(b)):
        assert pa.read_bytes() == pb.read_bytes()
    for p in a:
        if p.suffix == ".csv":
            header, recs = read_table(p)
            assert header and recs
        else:
            text = p.read_text()
            assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
