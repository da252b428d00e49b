from importlib import resources
from pathlib import Path

import pytest

from cpsbench.cli import UserError, main, parse_manifest, parse_values
from cpsbench.telemetry import read_table

SAMPLE = str(resources.files("cpsbench") / "data" / "sample_manifest.txt")


def _tree(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_sample_manifest_runs(tmp_path, capsys):
    assert main(["run", "--manifest", SAMPLE, "--out", str(tmp_path / "a")]) == 0
    trials = sorted((tmp_path / "a" / "trials").glob("*.events.jsonl"))
    assert len(trials) == 3
    assert (tmp_path / "a" / "combined.csv").is_file()
    assert "sorting-demo" in capsys.readouterr().out
    assert main(["run", "--manifest", SAMPLE, "--out", str(tmp_path / "b")]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def _manifest(tmp_path, body: str) -> str:
    p = tmp_path / "m.txt"
    p.write_text(body)
    return str(p)


def test_bad_manifest_exit_2(tmp_path, capsys):
    m = _manifest(tmp_path, "seed = 1\n[experiment x]\nworkload = sorting\nbelt = 90\n")
    assert main(["run", "--manifest", m, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "m.txt:4" in err and "belt" in err


def test_manifest_errors(tmp_path):
    with pytest.raises(UserError, match="duplicate"):
        parse_manifest(_manifest(tmp_path, "[experiment a]\nworkload = sorting\n[experiment a]\n"
                                           "workload = sorting\n"))
    with pytest.raises(UserError, match="colour"):
        parse_manifest(_manifest(tmp_path, "[experiment a]\ncolour = red\n"))


def test_seed_required_and_env_fallback(tmp_path, monkeypatch):
    m = _manifest(tmp_path, "[experiment a]\nworkload = suction_toggle\ngrid = true\ndwell = 5\n")
    monkeypatch.delenv("CPSBENCH_SEED", raising=False)
    assert main(["run", "--manifest", m, "--out", str(tmp_path / "o1")]) == 2
    monkeypatch.setenv("CPSBENCH_SEED", "11")
    assert main(["run", "--manifest", m, "--out", str(tmp_path / "o2")]) == 0
    assert main(["run", "--manifest", m, "--out", str(tmp_path / "o3"), "--seed", "11"]) == 0
    assert _tree(tmp_path / "o2") == _tree(tmp_path / "o3")


def test_parse_values():
    assert parse_values("30:100:10", "v") == (30, 40, 50, 60, 70, 80, 90, 100)
    assert parse_values("1,2.5", "v") == (1, 2.5)
    with pytest.raises(UserError):
        parse_values("", "v")
    with pytest.raises(UserError):
        parse_values("1:5:0", "v")


def test_one_factor_velocity_sweep(tmp_path):
    out = tmp_path / "s"
    assert main(["sweep", "--task", "app", "--one-factor", "--velocity", "30:100:10",
                 "--out", str(out), "--seed", "3"]) == 0
    _, recs = read_table(out / "trials.csv")
    assert len(recs) == 8
    assert sorted(int(r["velocity_pct"]) for r in recs) == list(range(30, 101, 10))


def test_micro_belt_sweep(tmp_path):
    out = tmp_path / "b"
    assert main(["sweep", "--task", "micro", "--belt", "0:80:10", "--dwell", "10",
                 "--out", str(out), "--seed", "3"]) == 0
    _, recs = read_table(out / "trials.csv")
    assert len(recs) == 9 and {r["workload_id"] for r in recs} == {"belt_sweep"}


def test_sweep_rejects_out_of_range(tmp_path):
    assert main(["sweep", "--task", "app", "--velocity", "10", "--out", str(tmp_path)]) == 2


def test_analyze_train_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["sweep", "--task", "app", "--one-factor", "--rounds", "2", "--out", str(out),
                 "--seed", "5"]) == 0
    micro = tmp_path / "micro"
    assert main(["sweep", "--task", "micro", "--dwell", "8", "--out", str(micro), "--seed", "5"]) == 0
    assert main(["analyze", "--data", str(out)]) == 0
    assert main(["analyze", "--data", str(micro)]) == 0
    assert len(list((micro / "figures").glob("fig_*.svg"))) == 5
    assert main(["train", "--data", str(out), "--task", "power_state", "--trees", "5",
                 "--folds", "3"]) == 0
    text = (out / "models" / "metrics_power_state.txt").read_text()
    assert all(name in text for name in ("DT", "RF", "ET"))
    assert main(["report", str(out)]) == 0
    report = (out / "report.md").read_text()
    assert "## Model comparison" in report and "## Feature importance" in report


def test_figure_count_on_full_sweep_output(tmp_path):
    root = tmp_path / "all"
    assert main(["sweep", "--task", "micro", "--dwell", "6", "--out", str(root / "micro"),
                 "--seed", "2"]) == 0
    assert main(["sweep", "--task", "app", "--one-factor", "--rounds", "2",
                 "--out", str(root / "app"), "--seed", "2"]) == 0
    assert main(["analyze", "--data", str(root)]) == 0
    assert len(list((root / "figures").glob("fig_*.svg"))) == 8


def test_missing_inputs_exit_2(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 2
    assert main(["analyze", "--data", str(tmp_path / "empty")]) == 2
    assert main(["train", "--data", str(tmp_path / "nope"), "--task", "round_energy"]) == 2
    assert main(["report", str(tmp_path / "nope")]) == 2
