"""Command-line entry point.

    rails-sim run [--config FILE] [--out DIR] [--seed N] [--methods nra,rails,raes,opt]
                  [--runs N] [--steps N] [--parallel N] [--no-timing] [--verbose]
    rails-sim trace RECORDS.csv [--steps 0,5,10,15] [--run N] [--methods ...]
    rails-sim plot-data RECORDS.csv [--out DIR]
    rails-sim validate-config [--config FILE]

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import harness
from .config import METHODS, ExperimentConfig, load_config
from .env import ConfigError

log = logging.getLogger("rails_sim")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _method_list(text: str) -> tuple[str, ...]:
    methods = tuple(m.strip().lower() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s): {', '.join(bad)}")
    return methods


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rails-sim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the closed-loop experiment")
    run.add_argument("--config", type=Path, help="JSON config (defaults: reference setup)")
    run.add_argument("--out", type=Path, help="output directory (fallback: $RAILS_SIM_OUT, then ./out)")
    run.add_argument("--seed", type=int)
    run.add_argument("--methods", type=_method_list)
    run.add_argument("--runs", type=int)
    run.add_argument("--steps", type=int)
    run.add_argument("--parallel", type=int, default=1, help="worker processes for independent runs")
    run.add_argument("--no-timing", action="store_true",
                     help="write zero wall times so repeated runs give identical bytes")
    run.add_argument("--verbose", "-v", action="count", default=0)

    trace = sub.add_parser("trace", help="print a per-step trace table from a records CSV")
    trace.add_argument("records", type=Path)
    trace.add_argument("--steps", type=_int_list, default=None, help="comma-separated steps (default: every 5th)")
    trace.add_argument("--run", type=int, default=None)
    trace.add_argument("--methods", type=_method_list, default=None)

    plot = sub.add_parser("plot-data", help="write plot-data CSVs from a records CSV")
    plot.add_argument("records", type=Path)
    plot.add_argument("--out", type=Path)

    val = sub.add_parser("validate-config", help="check a config and print it with defaults applied")
    val.add_argument("--config", type=Path)
    val.add_argument("config_path", type=Path, nargs="?")
    return parser


def _out_dir(arg: Path | None) -> Path:
    if arg is not None:
        return arg
    return Path(os.environ.get("RAILS_SIM_OUT", "out"))


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    for name in ("seed", "methods", "runs", "steps"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    return cfg.replace(**changes).check() if changes else cfg


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timing = not args.no_timing
    results = harness.run_experiment(cfg, parallel=args.parallel)
    n_domains = cfg.environment.n_domains
    with open(out / "records.csv", "w", newline="") as fh:
        harness.write_records((r for res in results for r in res.records), n_domains, fh, timing)
    with open(out / "metrics.csv", "w", newline="") as fh:
        harness.write_losses(results, fh)
    summary = harness.summary_document(cfg, results, timing)
    with open(out / "summary.json", "w") as fh:
        harness.dump_json(summary, fh)
    for name, text in harness.plot_data(results, summary).items():
        (out / name).write_text(text)
    env_dir = out / "environments"
    env_dir.mkdir(exist_ok=True)
    for res in results:
        (env_dir / f"run{res.run:03d}.json").write_text(res.environment.to_json())

    print(f"seed {cfg.seed}, {cfg.runs} run(s) x {cfg.steps} step(s), output in {out}")
    for m, s in summary["methods"].items():
        print(f"  {m.upper():6s} mean p_e2e {s['mean']:.4f} (std {s['std']:.4f})  solver time {s['wall_time_total']:.2f} s")
    ratio = summary.get("rails_raes_runtime_ratio")
    if ratio is not None:
        print(f"  RAILS/RAES runtime ratio {ratio:.3f}")
    return EXIT_OK


def _read_records(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"records file not found: {path}")
    with open(path, newline="") as fh:
        try:
            return harness.read_records(fh)
        except ValueError as exc:
            raise UsageError(f"malformed records file {path}: {exc}") from exc


def cmd_trace(args) -> int:
    records = _read_records(args.records)
    if not records:
        raise UsageError("records file has no rows")
    steps = args.steps or harness.default_trace_steps(records)
    try:
        rows = harness.emit_trace(records, steps, run=args.run, methods=args.methods)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from exc
    print(harness.format_trace(rows, len(records[0].delays)))
    return EXIT_OK


def cmd_plot_data(args) -> int:
    records = _read_records(args.records)
    if not records:
        raise UsageError("records file has no rows")
    summaries = harness.summaries_from_records(records)
    agg = harness.aggregate(summaries)
    first = min(r.run for r in records)
    results = [harness.RunResult(first, [r for r in records if r.run == first], summaries[0])]
    out = _out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in harness.plot_data(results, agg).items():
        (out / name).write_text(text)
        print(out / name)
    return EXIT_OK


def cmd_validate(args) -> int:
    path = args.config or args.config_path
    cfg = load_config(path)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "trace": cmd_trace, "plot-data": cmd_plot_data, "validate-config": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    verbosity = getattr(args, "verbose", 0)
    logging.basicConfig(
        level=logging.DEBUG if verbosity > 1 else logging.INFO if verbosity == 1 else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for path, msg in exc.errors:
            print(f"  {path or '<root>'}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, UsageError) else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.exception("run failed")
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
