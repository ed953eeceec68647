"""Closed-loop experiment driver.

Each time step: every provider emits feedback, every risk model is updated, then
each method solves against the same model snapshot and its choice is scored with
the true acceptance curves at that step.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config import METHODS, ExperimentConfig
from .decompose import product_value
from .env import Environment, build_environment, sample_feedback_arrays, system_load
from .risk import FeedbackBuffer, ModelEvaluator, TrainConfig, init_model, update
from .search import ground_truth_evaluators, nra_solve, opt_solve, raes_solve, rails_solve

log = logging.getLogger(__name__)

# named child streams per run; order fixes the seed derivation
STREAMS = ("environment", "init", "feedback", "nra", "rails")


@dataclass
class StepRecord:
    run: int
    step: int
    method: str
    p_true: float
    p_pred: float
    delays: tuple[float, ...]
    providers: tuple[int, ...]
    wall_time: float


@dataclass
class RunSummary:
    run: int
    mean_p: dict[str, float]
    wall_time: dict[str, float]


@dataclass
class RunResult:
    run: int
    records: list[StepRecord]
    summary: RunSummary
    losses: list[tuple[int, int, int, float]] = field(default_factory=list)  # (step, domain, provider, loss)
    environment: Environment | None = None


def run_streams(seed: int, run: int) -> dict[str, np.random.Generator]:
    """Independent generators for one run, derived from ``(seed, run)``."""
    children = np.random.SeedSequence(entropy=seed, spawn_key=(run,)).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def average_e2e(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise ValueError("cannot average an empty sequence")
    return float(np.mean(values))


def run_single(cfg: ExperimentConfig, run: int) -> RunResult:
    cfg.check()
    rngs = run_streams(cfg.seed, run)
    env = build_environment(cfg.environment, rngs["environment"])
    shape = env.shape
    train = TrainConfig(iterations=cfg.update_iterations, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    models = [[init_model(rngs["init"], cfg.input_scale) for _ in range(n)] for n in shape]
    buffers = [[FeedbackBuffer(cfg.buffer_capacity) for _ in range(n)] for n in shape]
    records: list[StepRecord] = []
    losses = []
    per_method = {m: [] for m in cfg.methods}
    wall = {m: 0.0 for m in cfg.methods}

    for t in range(cfg.steps):
        for i, providers in enumerate(env.domains):
            for j, p in enumerate(providers):
                n = int(math.floor(system_load(p, t)))
                delays, accepted = sample_feedback_arrays(p, t, n, rngs["feedback"])
                buffers[i][j].push_arrays(delays, accepted)
                _, loss = update(models[i][j], buffers[i][j], train)
                losses.append((t, i, j, math.nan if loss is None else loss))
        evaluators = [[ModelEvaluator(m) for m in ms] for ms in models]
        truth = ground_truth_evaluators(env, t)

        for method in METHODS:
            if method not in cfg.methods:
                continue
            if method == "nra":
                res = nra_solve(shape, cfg.d_e2e, rngs["nra"], models=evaluators)
            elif method == "rails":
                res = rails_solve(evaluators, cfg.d_e2e, cfg.rails_iterations, cfg.p_mu, rngs["rails"], cfg.grid_divisions)
            elif method == "raes":
                res = raes_solve(evaluators, cfg.d_e2e, cfg.grid_divisions)
            else:
                res = opt_solve(env, t, cfg.d_e2e, cfg.grid_divisions)
            chosen = [truth[i][j] for i, j in enumerate(res.assignment)]
            p_true = product_value(chosen, res.decomposition.delays)
            records.append(
                StepRecord(run, t, method, p_true, float(res.predicted_p_e2e),
                           tuple(res.decomposition.delays), tuple(res.assignment), res.wall_time)
            )
            per_method[method].append(p_true)
            wall[method] += res.wall_time
        log.info("run=%d step=%d %s", run, t,
                 " ".join(f"{m}={per_method[m][-1]:.3f}" for m in cfg.methods))

    summary = RunSummary(run, {m: average_e2e(v) for m, v in per_method.items()}, wall)
    return RunResult(run, records, summary, losses, env)


def _run_entry(args):
    cfg, run = args
    return run_single(cfg, run)


def run_experiment(cfg: ExperimentConfig, parallel: int = 1) -> list[RunResult]:
    """All runs of ``cfg``, ordered by run index regardless of ``parallel``."""
    cfg.check()
    jobs = [(cfg, r) for r in range(cfg.runs)]
    if parallel > 1 and cfg.runs > 1:
        from multiprocessing import Pool

        with Pool(min(parallel, cfg.runs)) as pool:
            results = pool.map(_run_entry, jobs)
    else:
        results = [_run_entry(j) for j in jobs]
    return sorted(results, key=lambda r: r.run)


def aggregate(summaries: Sequence[RunSummary]) -> dict:
    """Cross-run mean/std of the per-run averages and total solver times."""
    if not summaries:
        raise ValueError("need at least one run summary")
    methods = [m for m in METHODS if m in summaries[0].mean_p]
    out = {"runs": len(summaries), "methods": {}}
    for m in methods:
        vals = np.array([s.mean_p[m] for s in summaries])
        walls = np.array([s.wall_time[m] for s in summaries])
        out["methods"][m] = {
            "mean": float(vals.mean()),
            "std": float(vals.std()),
            "per_run": vals.tolist(),
            "wall_time_total": float(walls.sum()),
            "wall_time_mean": float(walls.mean()),
            "wall_time_std": float(walls.std()),
        }
    if "rails" in methods and "raes" in methods:
        raes = out["methods"]["raes"]["wall_time_total"]
        out["rails_raes_runtime_ratio"] = out["methods"]["rails"]["wall_time_total"] / raes if raes > 0 else None
    return out


# ---- persistence ----------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def records_header(n_domains: int) -> list[str]:
    return ["run", "step", "method", "p_e2e_true", "p_e2e_pred",
            *[f"d_{i + 1}" for i in range(n_domains)], "providers", "wall_time_s"]


def write_records(records: Iterable[StepRecord], n_domains: int, fh, timing: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(records_header(n_domains))
    for r in records:
        w.writerow([r.run, r.step, r.method, _fmt(r.p_true), _fmt(r.p_pred),
                    *[_fmt(d) for d in r.delays], " ".join(str(j) for j in r.providers),
                    _fmt(r.wall_time if timing else 0.0)])


def read_records(fh) -> list[StepRecord]:
    """Parse a records CSV; raises ``ValueError`` on malformed input."""
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty records file") from None
    n_domains = sum(1 for h in header if h.startswith("d_"))
    if n_domains < 1 or header != records_header(n_domains):
        raise ValueError(f"unexpected records header: {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            out.append(StepRecord(
                run=int(row[0]), step=int(row[1]), method=row[2],
                p_true=float(row[3]), p_pred=float(row[4]),
                delays=tuple(float(x) for x in row[5:5 + n_domains]),
                providers=tuple(int(x) for x in row[5 + n_domains].split()),
                wall_time=float(row[-1]),
            ))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out


def write_losses(results: Sequence[RunResult], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["run", "step", "domain", "provider", "loss"])
    for res in results:
        for step, i, j, loss in res.losses:
            w.writerow([res.run, step, i, j, _fmt(loss)])


def summary_document(cfg: ExperimentConfig, results: Sequence[RunResult], timing: bool = True) -> dict:
    agg = aggregate([r.summary for r in results])
    if not timing:
        for stats in agg["methods"].values():
            for k in ("wall_time_total", "wall_time_mean", "wall_time_std"):
                stats[k] = 0.0
        if "rails_raes_runtime_ratio" in agg:
            agg["rails_raes_runtime_ratio"] = None
    return {"seed": cfg.seed, "config": cfg.to_dict(), **agg}


def plot_data(results: Sequence[RunResult], agg: dict) -> dict[str, str]:
    """CSV text for the bar chart, runtime chart and per-step lines (first run)."""
    fig3, fig4, fig5 = io.StringIO(), io.StringIO(), io.StringIO()
    w3 = csv.writer(fig3, lineterminator="\n")
    w3.writerow(["method", "mean_p_e2e", "std_p_e2e"])
    w4 = csv.writer(fig4, lineterminator="\n")
    w4.writerow(["method", "wall_time_mean_s", "wall_time_std_s", "wall_time_total_s"])
    for m, s in agg["methods"].items():
        w3.writerow([m, _fmt(s["mean"]), _fmt(s["std"])])
        w4.writerow([m, _fmt(s["wall_time_mean"]), _fmt(s["wall_time_std"]), _fmt(s["wall_time_total"])])
    w5 = csv.writer(fig5, lineterminator="\n")
    w5.writerow(["run", "step", "method", "p_e2e_true"])
    for r in results[0].records:
        w5.writerow([r.run, r.step, r.method, _fmt(r.p_true)])
    return {
        "fig3_acceptance.csv": fig3.getvalue(),
        "fig4_runtime.csv": fig4.getvalue(),
        "fig5_per_step.csv": fig5.getvalue(),
    }


# ---- trace table ----------------------------------------------------------

def emit_trace(records: Sequence[StepRecord], steps: Iterable[int], run: int | None = None,
               methods: Sequence[str] | None = None) -> list[tuple]:
    """Rows ``(step, method, p_e2e, delays, providers)`` formatted to two decimals."""
    if run is None:
        run = min(r.run for r in records) if records else 0
    by_step: dict[int, list[StepRecord]] = {}
    for r in records:
        if r.run == run and (methods is None or r.method in methods):
            by_step.setdefault(r.step, []).append(r)
    rows = []
    for s in steps:
        if s not in by_step:
            raise KeyError(f"no records for step {s} in run {run}")
        ordered = sorted(by_step[s], key=lambda r: METHODS.index(r.method) if r.method in METHODS else len(METHODS))
        for r in ordered:
            rows.append((
                str(s),
                r.method.upper(),
                f"{r.p_true:.2f}",
                ", ".join(f"{d:.2f}" for d in r.delays),
                ", ".join(str(j) for j in r.providers),
            ))
    return rows


def format_trace(rows: Sequence[tuple], n_domains: int) -> str:
    header = ("Step", "Method", "p_e2e", ", ".join(f"d_{i + 1}" for i in range(n_domains)), "Providers")
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    lines = [" | ".join(str(h).ljust(w) for h, w in zip(header, widths))]
    lines.append("-+-".join("-" * w for w in widths))
    lines += [" | ".join(str(c).ljust(w) for c, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)


def default_trace_steps(records: Sequence[StepRecord]) -> list[int]:
    steps = sorted({r.step for r in records})
    return [s for s in steps if s % 5 == 0]


def dump_json(obj, fh) -> None:
    json.dump(obj, fh, indent=2, sort_keys=True)
    fh.write("\n")


def summaries_from_records(records: Sequence[StepRecord]) -> list[RunSummary]:
    """Rebuild per-run summaries from a record stream (e.g. a records CSV)."""
    by_run: dict[int, dict[str, list[StepRecord]]] = {}
    for r in records:
        by_run.setdefault(r.run, {}).setdefault(r.method, []).append(r)
    out = []
    for run in sorted(by_run):
        methods = [m for m in METHODS if m in by_run[run]]
        out.append(RunSummary(
            run,
            {m: average_e2e([r.p_true for r in by_run[run][m]]) for m in methods},
            {m: float(sum(r.wall_time for r in by_run[run][m])) for m in methods},
        ))
    return out
