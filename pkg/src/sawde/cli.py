"""Command line entry point: ``sawde {run,experiment,rank-cms,report,ttest}``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DatasetError, ManifestEntry, resolve_dataset
from .engine import EngineConfig
from .harness import (
    OUTPUT_ENV,
    ExperimentSpec,
    LogError,
    build_report,
    emit_convergence,
    read_log,
    run_experiment,
    run_one,
    welch_t_test,
    write_report,
)
from .strategy import rank_cms, rank_from_counts, worst_counts

ENGINE_FLAGS = ("N", "m", "max_fes", "theta", "k", "folds", "workers")


def _engine_args(p: argparse.ArgumentParser) -> None:
    d = EngineConfig()
    g = p.add_argument_group("engine")
    g.add_argument("--N", type=int, default=d.N, help="population size (default %(default)s)")
    g.add_argument("--m", type=int, default=d.m, help="sub-populations (default %(default)s)")
    g.add_argument("--max-fes", dest="max_fes", type=int, default=d.max_fes,
                   help="evaluation budget (default %(default)s)")
    g.add_argument("--theta", type=float, default=d.theta, help="selection threshold (default %(default)s)")
    g.add_argument("--k", type=int, default=d.k, help="KNN neighbours (default %(default)s)")
    g.add_argument("--folds", type=int, default=d.folds, help="CV folds (default %(default)s)")
    g.add_argument("--workers", type=int, default=1, help="evaluation threads")
    g.add_argument("--no-early-stop", dest="early_stop", action="store_false")
    g.add_argument("--train-fraction", type=float, default=0.7)


def _engine_overrides(args) -> dict:
    out = {k: getattr(args, k) for k in ENGINE_FLAGS}
    out["early_stop"] = args.early_stop
    return out


def _output_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or "sawde-output")


def cmd_run(args) -> int:
    ds = resolve_dataset(args.data, args.label_column)
    out = _output_dir(args)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    stem = f"{ds.name}__{args.algorithm.replace(':', '-')}__seed{args.seed}"
    log_path = out / "logs" / f"{stem}.jsonl"
    with open(log_path, "w") as fh:
        result, _ = run_one(ds, args.algorithm, args.seed, _engine_overrides(args), 0,
                            args.train_fraction, fh)
    conv = out / "convergence"
    conv.mkdir(exist_ok=True)
    (conv / f"{stem}.csv").write_text(emit_convergence(log_path))
    summary = {
        "dataset": ds.name,
        "algorithm": args.algorithm,
        "seed": args.seed,
        "train_accuracy": result.train_accuracy,
        "test_accuracy": result.test_accuracy,
        "subset_size": result.subset_size,
        "D": result.D,
        "reduction_pct": 100 * result.reduction_rate,
        "selected": [ds.feature_names[j] for j in result.selected_features],
        "fes_used": result.fes_used,
        "generations": result.generations,
        "stop_reason": result.stop_reason,
        "log": str(log_path),
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_experiment(args) -> int:
    if args.manifest:
        datasets = args.manifest
    else:
        datasets = [ManifestEntry(Path(p).stem if ":" not in p else p.split(":", 1)[1], p) for p in args.data]
    spec = ExperimentSpec(
        datasets=datasets,
        algorithms=args.algorithms,
        repeats=args.repeats,
        engine=_engine_overrides(args),
        seed_base=args.seed_base,
        output_dir=str(_output_dir(args)),
        train_fraction=args.train_fraction,
    )
    report = run_experiment(spec)
    for row in report.rows:
        print(
            f"{row['dataset']:<22} {row['algorithm']:<14} train {row['train_mean']:.4f}±{row['train_std']:.4f}"
            f"  test {row['test_mean']:.4f}±{row['test_std']:.4f}"
            f"  size {row['size_mean']:.1f} ({row['reduction_pct']:.1f}%)"
        )
    if report.errors:
        print(json.dumps({"status": "failed", "errors": report.errors}), file=sys.stderr)
        return 1
    return 0


def cmd_rank_cms(args) -> int:
    if args.counts:
        counts = [int(c) for c in args.counts.split(",")]
        chosen = rank_from_counts(counts)
    else:
        with open(args.table, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        table = np.array([[float(c) for c in r[-8:]] for r in body])
        counts = worst_counts(table).tolist()
        chosen = rank_cms(table)
        del header
    print(json.dumps({"worst_counts": counts, "selected": chosen}))
    return 0


def cmd_report(args) -> int:
    log_dir = Path(args.logs)
    paths = sorted(log_dir.glob("*.jsonl"))
    if not paths:
        raise LogError(f"no *.jsonl logs in {log_dir}")
    report = build_report([read_log(p) for p in paths])
    out = Path(args.out) if args.out else log_dir.parent
    write_report(report, out)
    print(f"wrote {out / 'report.csv'} ({len(report.rows)} rows from {len(paths)} logs)")
    return 0


def cmd_ttest(args) -> int:
    with open(args.file, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if args.metric:
        def pick(alg):
            return [float(r[args.metric]) for r in rows
                    if r["algorithm"] == alg and (args.dataset is None or r["dataset"] == args.dataset)]
        a, b = pick(args.a), pick(args.b)
    else:
        a = [float(r[args.a]) for r in rows if r[args.a] != ""]
        b = [float(r[args.b]) for r in rows if r[args.b] != ""]
    p = welch_t_test(a, b)
    print(json.dumps({"a": args.a, "b": args.b, "n_a": len(a), "n_b": len(b),
                      "mean_a": float(np.mean(a)), "mean_b": float(np.mean(b)),
                      "p_value": p, "significant_5pct": p < 0.05}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sawde", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="one dataset, one algorithm, one seed")
    r.add_argument("--data", required=True, help="CSV path or builtin:<name> (wdbc, sonar)")
    r.add_argument("--label-column", default="last")
    r.add_argument("--algorithm", default="sawde", help="sawde or single-cms:<1..8>")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help=f"output directory (env {OUTPUT_ENV})")
    _engine_args(r)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", help="datasets x algorithms x repeats")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", help="lines of 'name, path[, label-column]'")
    src.add_argument("--data", nargs="+", help="CSV paths or builtin:<name>")
    e.add_argument("--algorithms", nargs="+", default=["sawde"])
    e.add_argument("--repeats", type=int, default=5)
    e.add_argument("--seed-base", type=int, default=0)
    e.add_argument("--out", help=f"output directory (env {OUTPUT_ENV})")
    _engine_args(e)
    e.set_defaults(func=cmd_experiment)

    k = sub.add_parser("rank-cms", help="choose the five pool scenarios")
    ksrc = k.add_mutually_exclusive_group(required=True)
    ksrc.add_argument("--table", help="CSV, one row per dataset, last 8 columns = scenario accuracies")
    ksrc.add_argument("--counts", help="comma-separated worst-placement counts for scenarios 1..8")
    k.set_defaults(func=cmd_rank_cms)

    rep = sub.add_parser("report", help="aggregate a directory of run logs")
    rep.add_argument("logs")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)

    t = sub.add_parser("ttest", help="Welch t-test between two result columns")
    t.add_argument("file")
    t.add_argument("a", help="column name, or algorithm with --metric")
    t.add_argument("b")
    t.add_argument("--metric", help="long format: compare this column between algorithms a and b")
    t.add_argument("--dataset")
    t.set_defaults(func=cmd_ttest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, LogError, ValueError, KeyError, OSError) as exc:
        print(json.dumps({"status": "error", "command": args.command,
                          "error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
