"""Experiment protocol: repeated runs over datasets and algorithms, run logs,
aggregated reports, convergence tables and significance tests.

Every number in a report is recomputed from the run logs, so ``report`` on a
directory of logs reproduces the tables written by ``run_experiment``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import stats as _st

from .dataset import (
    DatasetError,
    ManifestEntry,
    assign_folds,
    normalize,
    read_manifest,
    resolve_dataset,
    split_train_test,
)
from .engine import EngineConfig, RunLog, run

__all__ = [
    "OUTPUT_ENV",
    "LogError",
    "ExperimentSpec",
    "Report",
    "prepare",
    "run_one",
    "run_experiment",
    "read_log",
    "aggregate",
    "build_report",
    "emit_convergence",
    "welch_t_test",
    "write_csv",
    "write_report",
]

OUTPUT_ENV = "SAWDE_OUTPUT_DIR"

REPORT_COLUMNS = [
    "dataset", "algorithm", "repeats", "D",
    "train_mean", "train_std", "test_mean", "test_std",
    "size_mean", "size_std", "reduction_pct", "fes_mean",
]
RUN_COLUMNS = [
    "dataset", "algorithm", "repeat", "seed", "D", "train_accuracy", "test_accuracy",
    "subset_size", "reduction_pct", "fes_used", "generations", "stop_reason",
]
CONVERGENCE_COLUMNS = ["generation", "fes", "best_train_accuracy", "best_subset_size"]


class LogError(ValueError):
    """A run log is unreadable or incomplete."""


@dataclass
class ExperimentSpec:
    datasets: list
    algorithms: list = field(default_factory=lambda: ["sawde"])
    repeats: int = 5
    engine: dict = field(default_factory=dict)
    seed_base: int = 0
    output_dir: Optional[str] = None
    train_fraction: float = 0.7

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if isinstance(self.datasets, (str, os.PathLike)):
            self.datasets = read_manifest(self.datasets)
        for alg in self.algorithms:
            EngineConfig(algorithm=alg)  # validates the name
        if self.output_dir is None:
            self.output_dir = os.environ.get(OUTPUT_ENV, "sawde-output")


@dataclass
class Report:
    rows: list
    runs: list
    errors: list
    wall_clock: dict

    @property
    def ok(self) -> bool:
        return not self.errors


def _slug(algorithm: str) -> str:
    return algorithm.replace(":", "-")


def prepare(ds, seed: int, folds: int = 3, train_fraction: float = 0.7):
    """Split 7:3, scale on train, assign CV folds. Returns ``(train, test)``."""
    train, test = split_train_test(ds, train_fraction, seed)
    train, test, _ = normalize(train, test)
    return assign_folds(train, folds, seed), test


def run_one(ds, algorithm: str, seed: int, engine: Optional[dict] = None, repeat: int = 0,
            train_fraction: float = 0.7, log_stream=None):
    """One cell of an experiment. Returns ``(RunResult, RunLog)``."""
    engine = dict(engine or {})
    cfg = EngineConfig(seed=seed, algorithm=algorithm, **engine)
    train, test = prepare(ds, seed, cfg.folds, train_fraction)
    log = RunLog(log_stream)
    log.write("run", dataset=ds.name, algorithm=algorithm, repeat=repeat, seed=seed)
    return run(cfg, train, test, log), log


def run_experiment(spec: ExperimentSpec) -> Report:
    out = Path(spec.output_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    errors, log_paths, wall = [], [], {}
    for entry in spec.datasets:
        entry = entry if isinstance(entry, ManifestEntry) else ManifestEntry(*entry)
        try:
            ds = resolve_dataset(entry.path, entry.label_column, name=entry.name)
        except (DatasetError, OSError) as exc:
            errors.append({"dataset": entry.name, "error": str(exc)})
            continue
        for alg in spec.algorithms:
            for rep in range(spec.repeats):
                path = out / "logs" / f"{entry.name}__{_slug(alg)}__r{rep}.jsonl"
                t0 = time.perf_counter()
                try:
                    with open(path, "w") as fh:
                        run_one(ds, alg, spec.seed_base + rep, spec.engine, rep, spec.train_fraction, fh)
                except Exception as exc:  # one failed cell must not abort the suite
                    errors.append({"dataset": entry.name, "algorithm": alg, "repeat": rep, "error": str(exc)})
                    continue
                wall[(entry.name, alg, rep)] = time.perf_counter() - t0
                log_paths.append(path)
    report = build_report([read_log(p) for p in log_paths])
    report.errors.extend(errors)
    report.wall_clock = wall
    write_report(report, out)
    return report


# --------------------------------------------------------------------------
# logs


def read_log(source: Union[str, os.PathLike, Iterable[str]]) -> list:
    """Parse a JSON-lines run log and check it ends with a result record."""
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(source)
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            raise LogError(f"log corrupt at line {lineno}; {_last_valid(records)}") from None
    if not records or records[-1].get("type") != "result":
        raise LogError(f"log truncated (no result record); {_last_valid(records)}")
    return records


def _last_valid(records: list) -> str:
    if not records:
        return "no valid record"
    last = records[-1]
    detail = f" generation {last['generation']}" if "generation" in last else ""
    return f"last valid record #{len(records)} ({last.get('type')}{detail})"


def _runs_from_logs(logs: Sequence[list]) -> list:
    runs = []
    for records in logs:
        head = next((r for r in records if r["type"] == "run"), {})
        res = records[-1]
        if res.get("type") != "result":
            raise LogError(f"log truncated (no result record); {_last_valid(records)}")
        runs.append({
            "dataset": head.get("dataset", "?"),
            "algorithm": head.get("algorithm", "?"),
            "repeat": head.get("repeat", 0),
            "seed": head.get("seed", 0),
            "D": res["D"],
            "train_accuracy": res["train_accuracy"],
            "test_accuracy": res["test_accuracy"],
            "subset_size": res["subset_size"],
            "reduction_pct": 100.0 * res["reduction_rate"],
            "fes_used": res["fes_used"],
            "generations": res["generations"],
            "stop_reason": res["stop_reason"],
        })
    runs.sort(key=lambda r: (r["dataset"], r["algorithm"], r["repeat"]))
    return runs


def _mean_std(values) -> tuple:
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def aggregate(runs: Sequence[dict]) -> list:
    """Mean and sample std per (dataset, algorithm)."""
    groups: dict = {}
    for r in runs:
        groups.setdefault((r["dataset"], r["algorithm"]), []).append(r)
    rows = []
    for (dataset, alg), rs in sorted(groups.items()):
        D = rs[0]["D"]
        tr_m, tr_s = _mean_std([r["train_accuracy"] for r in rs])
        tests = [r["test_accuracy"] for r in rs if r["test_accuracy"] is not None]
        te_m, te_s = _mean_std(tests) if tests else (float("nan"), float("nan"))
        sz_m, sz_s = _mean_std([r["subset_size"] for r in rs])
        rows.append({
            "dataset": dataset, "algorithm": alg, "repeats": len(rs), "D": D,
            "train_mean": tr_m, "train_std": tr_s, "test_mean": te_m, "test_std": te_s,
            "size_mean": sz_m, "size_std": sz_s,
            "reduction_pct": 100.0 * (1.0 - sz_m / D),
            "fes_mean": float(np.mean([r["fes_used"] for r in rs])),
        })
    return rows


def build_report(logs: Sequence[list]) -> Report:
    runs = _runs_from_logs(logs)
    return Report(rows=aggregate(runs), runs=runs, errors=[], wall_clock={})


def _convergence_rows(records: list) -> list:
    return [
        [r["generation"], r["fes"], r["best_train_accuracy"], r["best_subset_size"]]
        for r in records
        if r["type"] == "generation"
    ]


def emit_convergence(records: Union[list, str, os.PathLike]) -> str:
    """Plot-ready CSV text, one row per generation."""
    if not isinstance(records, list):
        records = read_log(records)
    elif not records or records[-1].get("type") != "result":
        raise LogError(f"log truncated (no result record); {_last_valid(records)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_COLUMNS)
    for g, fes, acc, size in _convergence_rows(records):
        w.writerow([g, fes, f"{acc:.6f}", size])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return v


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_report(report: Report, out: Union[str, os.PathLike]) -> None:
    """``report.csv``, ``runs.csv``, ``errors.json`` and, when wall-clock data
    exists, ``timing.csv`` (the only non-deterministic file)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "report.csv", REPORT_COLUMNS, report.rows)
    write_csv(out / "runs.csv", RUN_COLUMNS, report.runs)
    (out / "errors.json").write_text(json.dumps(report.errors, indent=2, sort_keys=True) + "\n")
    if report.wall_clock:
        rows = [
            {"dataset": d, "algorithm": a, "repeat": r, "seconds": s}
            for (d, a, r), s in sorted(report.wall_clock.items())
        ]
        write_csv(out / "timing.csv", ["dataset", "algorithm", "repeat", "seconds"], rows)
    log_dir = out / "logs"
    if log_dir.is_dir():
        conv = out / "convergence"
        conv.mkdir(exist_ok=True)
        for p in sorted(log_dir.glob("*.jsonl")):
            (conv / (p.stem + ".csv")).write_text(emit_convergence(p))


# --------------------------------------------------------------------------
# statistics


def welch_t_test(sample_a, sample_b) -> float:
    """Two-sided p-value of Welch's unequal-variance t-test.

    Two constant samples give 1.0 when their means agree and 0.0 otherwise.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    ma, mb = a.mean(), b.mean()
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 == 0.0:
        return 1.0 if ma == mb else 0.0
    t = (ma - mb) / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    return float(min(1.0, 2.0 * _st.t.sf(abs(t), df)))
