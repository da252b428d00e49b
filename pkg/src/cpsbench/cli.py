"""Command-line entry point: run, sweep, analyze, train, report.

Exit codes: 0 success, 2 user error (bad input, missing data), 1 internal error.

Run directory layout (``run`` and ``sweep``)::

    <out>/trials.csv                 one line of parameters per trial
    <out>/trials/<id>.csv            1 Hz snapshot rows
    <out>/trials/<id>.rounds.csv     one record per round
    <out>/trials/<id>.events.jsonl   adapter event log
    <out>/combined.csv               all snapshot rows (when combined)
    <out>/combined_rounds.csv        all round records (when combined)
"""

from __future__ import annotations

import argparse
import itertools
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis
from .control import ControllerConfig, RunLog, run_params
from .program import PAYLOADS_G, ExperimentParams, check_application_ranges
from .telemetry import export_csv
from .workloads import export_rounds

logger = logging.getLogger("cpsbench")

SEED_ENV = "CPSBENCH_SEED"


class UserError(Exception):
    """Bad input from the operator; maps to exit code 2."""


# -- manifest ---------------------------------------------------------------

@dataclass(frozen=True)
class RunManifest:
    experiments: tuple[ExperimentParams, ...]
    out: Path | None
    seed: int | None
    combined: bool = True


_BLOCK_KEYS = {"workload": "workload_id", "velocity": "velocity_pct",
               "acceleration": "acceleration_pct", "belt": "belt_speed", "payload": "payload_g",
               "rounds": "rounds", "seed": "seed", "axis": "axis", "grid": "grid", "dwell": "dwell_s"}
_TOP_KEYS = ("seed", "out", "combined")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _parse_scalar(text: str):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    v = float(t)
    return int(v) if v.is_integer() else v


def _convert(key: str, text: str):
    if key in ("workload", "axis"):
        return text.strip()
    if key == "grid":
        return tuple(_parse_scalar(v) for v in text.split(",") if v.strip())
    if key in ("velocity", "acceleration", "payload", "rounds", "seed"):
        v = float(text)
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {text.strip()!r}")
        return int(v)
    return float(text)


def derive_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, dtype=np.uint64)[0])


def parse_manifest(path: Path | str, seed: int | None = None) -> RunManifest:
    """Parse the plain-text manifest; errors carry ``file:line`` and the field name.

    ``seed`` overrides the manifest's master seed. Blocks with their own
    ``seed`` key keep it.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UserError(f"cannot read manifest {path}: {exc}") from None
    top: dict = {}
    blocks: list[tuple[str, int, dict]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        if line.startswith("["):
            if not (line.endswith("]") and line[1:-1].split(None, 1)[0] == "experiment"):
                raise UserError(f"{where}: expected '[experiment <id>]'")
            parts = line[1:-1].split(None, 1)
            if len(parts) < 2:
                raise UserError(f"{where}: experiment block needs an id")
            exp_id = parts[1].strip()
            if any(b[0] == exp_id for b in blocks):
                raise UserError(f"{where}: duplicate experiment id {exp_id!r}")
            blocks.append((exp_id, lineno, {}))
            continue
        if "=" not in line:
            raise UserError(f"{where}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if blocks:
                if key not in _BLOCK_KEYS:
                    raise ValueError(f"unknown key (expected one of {', '.join(_BLOCK_KEYS)})")
                blocks[-1][2][key] = (_convert(key, value), lineno)
            else:
                if key not in _TOP_KEYS:
                    raise ValueError(f"unknown key (expected one of {', '.join(_TOP_KEYS)})")
                top[key] = (int(value) if key == "seed" else
                            _parse_bool(value) if key == "combined" else Path(value))
        except ValueError as exc:
            raise UserError(f"{where}: field {key!r}: {exc}") from None
    if not blocks:
        raise UserError(f"{path}: no [experiment <id>] blocks")
    master = seed if seed is not None else top.get("seed")
    experiments = []
    for index, (exp_id, lineno, kv) in enumerate(blocks):
        kw = {_BLOCK_KEYS[k]: v for k, (v, _) in kv.items()}
        if "workload_id" not in kw:
            raise UserError(f"{path}:{lineno}: experiment {exp_id!r}: missing field 'workload'")
        if "seed" not in kw and master is not None:
            kw["seed"] = derive_seed(master, index)
        try:
            params = ExperimentParams(experiment_id=exp_id, **kw)
            if params.workload_id == "sorting":
                check_application_ranges(params)
        except (ValueError, TypeError) as exc:
            field_lines = {k: ln for k, (_, ln) in kv.items()}
            bad = next((k for k in _BLOCK_KEYS if k in field_lines and
                        (_BLOCK_KEYS[k] in str(exc) or k in str(exc))), None)
            at = f"{path}:{field_lines[bad]}" if bad else f"{path}:{lineno}"
            raise UserError(f"{at}: experiment {exp_id!r}: {exc}") from None
        experiments.append(params)
    return RunManifest(tuple(experiments), top.get("out"), master, top.get("combined", True))


# -- running ----------------------------------------------------------------

def execute_trials(experiments: Sequence[ExperimentParams], out: Path, combined: bool = True,
                   config: ControllerConfig = ControllerConfig(), echo=print) -> list[RunLog]:
    """Run each experiment, write its files, then the index and combined tables."""
    out.mkdir(parents=True, exist_ok=True)
    logs, entries = [], []
    for params in experiments:
        log = run_params(params, config)
        stem = params.label
        log.write(out / "trials", stem)
        entries.append((params, f"trials/{stem}"))
        logs.append(log)
        rej = len(log.rejected())
        echo(f"{stem}: {log.virtual_duration:.1f} s virtual, {len(log.rows)} rows, "
             f"{len(log.rounds)} rounds" + (f", {rej} rejected commands" if rej else ""))
    analysis.write_trials_index(out / "trials.csv", entries)
    if combined:
        export_csv([r for log in logs for r in log.rows], out / "combined.csv")
        export_rounds([r for log in logs for r in log.rounds], out / "combined_rounds.csv")
    return logs


def _resolve_seed(flag: int | None, fallback: int | None = None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise UserError(f"{SEED_ENV}={env!r} is not an integer") from None
    return fallback


def cmd_run(args) -> int:
    manifest = parse_manifest(args.manifest, _resolve_seed(args.seed))
    if manifest.seed is None:
        raise UserError(f"{args.manifest}: no seed given (manifest 'seed', --seed or {SEED_ENV})")
    out = Path(args.out) if args.out else manifest.out
    if out is None:
        out = Path("runs") / f"{Path(args.manifest).stem}-seed{manifest.seed}"
    execute_trials(manifest.experiments, out, manifest.combined)
    print(f"wrote {len(manifest.experiments)} trials to {out}")
    return 0


def parse_values(text: str, name: str) -> tuple:
    """``a,b,c`` or ``start:stop:step`` (inclusive stop)."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3 or parts[2] <= 0:
                raise ValueError("expected start:stop:step with a positive step")
            start, stop, step = parts
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            vals = [start + i * step for i in range(max(n, 0))]
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UserError(f"--{name}: {exc}") from None
    if not vals:
        raise UserError(f"--{name}: empty grid")
    return tuple(int(v) if float(v).is_integer() else v for v in vals)


APP_DEFAULTS = {
    "velocity": tuple(range(30, 101, 10)),
    "acceleration": tuple(range(20, 101, 10)),
    "belt": tuple(range(40, 81, 10)),
    "payload": PAYLOADS_G,
}
APP_BASE = {"velocity": 50, "acceleration": 50, "belt": 40, "payload": 0}


def app_grid(values: dict, one_factor: bool, base: dict, rounds: int, seed: int) -> list[ExperimentParams]:
    factors = ("velocity", "acceleration", "belt", "payload")
    combos: list[dict] = []
    if one_factor:
        swept = [f for f in factors if values.get(f) is not None] or list(factors)
        for f in swept:
            for v in values.get(f) or APP_DEFAULTS[f]:
                combos.append({**base, f: v})
    else:
        lists = [values.get(f) or APP_DEFAULTS[f] for f in factors]
        combos = [dict(zip(factors, c)) for c in itertools.product(*lists)]
    out, seen = [], set()
    for c in combos:
        key = tuple(c[f] for f in factors)
        if key in seen:
            continue
        seen.add(key)
        p = ExperimentParams("sorting", velocity_pct=int(c["velocity"]),
                             acceleration_pct=int(c["acceleration"]), belt_speed=float(c["belt"]),
                             payload_g=int(c["payload"]), rounds=rounds,
                             seed=derive_seed(seed, len(out)))
        check_application_ranges(p)
        out.append(p)
    return out


MICRO_DEFAULTS = {
    "velocity": tuple(range(0, 101, 10)),
    "acceleration": tuple(range(0, 101, 10)),
    "belt": tuple(range(0, 81, 10)),
    "payload": PAYLOADS_G,
    "suction": (False, True),
    "camera": (False, True),
}


def micro_grid(values: dict, base: dict, dwell: float, seed: int) -> list[ExperimentParams]:
    chosen = [k for k in MICRO_DEFAULTS if values.get(k) is not None] or list(MICRO_DEFAULTS)
    out: list[ExperimentParams] = []

    def add(workload: str, **kw) -> None:
        out.append(ExperimentParams(workload, dwell_s=dwell, seed=derive_seed(seed, len(out)), **kw))

    for k in chosen:
        for v in values.get(k) or MICRO_DEFAULTS[k]:
            if k == "velocity":
                add("arm_sweep", velocity_pct=int(v), acceleration_pct=base["acceleration"],
                    axis="velocity", grid=(int(v),), experiment_id=f"arm_sweep-velocity-{v}")
            elif k == "acceleration":
                add("arm_sweep", velocity_pct=base["velocity"], acceleration_pct=int(v),
                    axis="acceleration", grid=(int(v),), experiment_id=f"arm_sweep-acceleration-{v}")
            elif k == "belt":
                add("belt_sweep", belt_speed=float(v), grid=(v,), experiment_id=f"belt_sweep-{v}")
            elif k == "payload":
                add("payload_sweep", payload_g=int(v), velocity_pct=base["velocity"],
                    acceleration_pct=base["acceleration"], grid=(int(v),),
                    experiment_id=f"payload_sweep-{v}")
            else:
                workload = "suction_toggle" if k == "suction" else "camera_toggle"
                state = "on" if v else "off"
                add(workload, grid=(bool(v),), experiment_id=f"{workload}-{state}")
    return out


def cmd_sweep(args) -> int:
    seed = _resolve_seed(args.seed, 0)
    values = {k: parse_values(getattr(args, k), k) if getattr(args, k) else None
              for k in ("velocity", "acceleration", "belt", "payload")}
    base_parts = parse_values(args.base, "base")
    if len(base_parts) != 4:
        raise UserError("--base needs velocity,acceleration,belt,payload")
    base = dict(zip(("velocity", "acceleration", "belt", "payload"), base_parts))
    try:
        if args.task == "app":
            trials = app_grid(values, args.one_factor, base, args.rounds, seed)
        else:
            for k in ("suction", "camera"):
                values[k] = tuple(_parse_bool(v) for v in getattr(args, k).split(",")) \
                    if getattr(args, k) else None
            trials = micro_grid(values, base, args.dwell, seed)
    except ValueError as exc:
        raise UserError(str(exc)) from None
    if not trials:
        raise UserError("empty grid")
    out = Path(args.out) if args.out else Path("runs") / f"sweep-{args.task}-seed{seed}"
    logs = execute_trials(trials, out, combined=True,
                          echo=print if args.verbose else (lambda *_: None))
    n_rows = sum(len(log.rows) for log in logs)
    print(f"{len(trials)} trials, {n_rows} snapshot rows -> {out}")
    return 0


def _find_runs(data: Path) -> list[Path]:
    if (data / "trials.csv").is_file():
        return [data]
    return sorted(p.parent for p in data.glob("*/trials.csv"))


def cmd_analyze(args) -> int:
    data = Path(args.data)
    runs = _find_runs(data) if data.is_dir() else []
    if not runs:
        raise UserError(f"{data}: no trials.csv found (expected a run directory)")
    trials = [t for run in runs for t in analysis.load_run(run)]
    out = Path(args.out) if args.out else data / "figures"
    figs = analysis.build_figures(trials)
    written = analysis.emit_plots(figs, out)
    n = sum(1 for p in written if p.suffix == ".svg")
    print(f"{n} figures -> {out}")
    return 0


def cmd_train(args) -> int:
    from . import mlcore
    seed = _resolve_seed(args.seed, 0)
    data = Path(args.data)
    if not data.exists():
        raise UserError(f"no dataset at {data}")
    if data.is_dir() and not (data / "trials.csv").is_file():
        runs = _find_runs(data)
        if len(runs) != 1:
            raise UserError(f"{data}: expected exactly one run directory, found {len(runs)}")
        data = runs[0]
    tasks = mlcore.TASKS if args.task == "all" else (args.task,)
    out = Path(args.out) if args.out else (data if data.is_dir() else data.parent) / "models"
    hyper = mlcore.Hyper(n_trees=args.trees)
    for task in tasks:
        try:
            dm = mlcore.assemble(task, data)
        except ValueError as exc:
            raise UserError(str(exc)) from None
        if dm.X.shape[0] < args.folds:
            raise UserError(f"{task}: {dm.X.shape[0]} rows, fewer than {args.folds} folds")
        cmp = mlcore.compare_models(task, dm, k=args.folds, seed=seed, hyper=hyper)
        cmp.write_csv(out / f"metrics_{task}.csv")
        text = cmp.render()
        (out / f"metrics_{task}.txt").write_text(text, encoding="utf-8")
        weights = mlcore.feature_importance(mlcore.fit_full(dm, seed, hyper))
        mlcore.write_importance(weights, out / f"importance_{task}.csv", task)
        print(text, end="")
        print("importance: " + ", ".join(f"{k}={v:.3f}" for k, v in weights.items()))
    return 0


def cmd_report(args) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        raise UserError(f"{root}: not a directory")
    metrics = sorted(root.rglob("metrics_*.txt"))
    importance = sorted(root.rglob("importance_*.csv"))
    figures = sorted(root.rglob("fig_*.svg"))
    trials = sorted(root.rglob("trials.csv"))
    if not (metrics or importance or figures or trials):
        raise UserError(f"{root}: nothing to report (no trials, figures or model files)")
    lines = [f"# cpsbench report: {root.name}", ""]
    if trials:
        lines += ["## Runs", ""]
        for t in trials:
            _, recs = analysis.read_table(t)
            lines.append(f"- `{t.parent.relative_to(root).as_posix() or '.'}`: {len(recs)} trials")
        lines.append("")
    if figures:
        lines += ["## Figures", ""] + [f"- `{f.relative_to(root).as_posix()}`" for f in figures] + [""]
    if metrics:
        lines += ["## Model comparison", ""]
        for m in metrics:
            lines += ["```", m.read_text(encoding="utf-8").rstrip("\n"), "```", ""]
    if importance:
        lines += ["## Feature importance", "", "| task | feature | importance |", "|---|---|---|"]
        for path in importance:
            _, recs = analysis.read_table(path)
            for r in recs:
                lines.append(f"| {r['task']} | {r['feature']} | {float(r['importance']):.3f} |")
        lines.append("")
    out = root / "report.md"
    out.write_text("\n".join(lines), encoding="utf-8")
    print(f"report -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cpsbench", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute the experiments of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid of configurations")
    p.add_argument("--task", choices=("app", "micro"), required=True)
    p.add_argument("--one-factor", action="store_true",
                   help="vary one factor at a time around --base instead of the cross-product")
    p.add_argument("--velocity")
    p.add_argument("--acceleration")
    p.add_argument("--belt")
    p.add_argument("--payload")
    p.add_argument("--suction", help="micro only: pump states, e.g. false,true")
    p.add_argument("--camera", help="micro only: cube present states, e.g. false,true")
    p.add_argument("--base", default="50,50,40,0", help="velocity,acceleration,belt,payload")
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--dwell", type=float, default=300.0)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="box summaries, curves and figures")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="cross-validate DT/RF/ET and rank features")
    p.add_argument("--data", required=True)
    p.add_argument("--task", choices=("power_state", "round_energy", "round_duration", "all"),
                   required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("report", help="collect a run's artifacts into report.md")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UserError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # last-resort boundary
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


__all__ = ["main", "parse_manifest", "RunManifest", "execute_trials"]
