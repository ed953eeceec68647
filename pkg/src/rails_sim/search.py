"""Provider selection: iterated local search and the baseline solvers.

Every solver hands the continuous part (how to split the delay budget for a
fixed choice of providers) to :func:`rails_sim.decompose.decompose`.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decompose import DEFAULT_GRID_DIVISIONS, CachedEvaluator, Decomposition, decompose, product_value
from .env import Environment, GroundTruthEvaluator

log = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**6
DEFAULT_P_MU = 0.8

Assignment = tuple  # provider index per domain


class EnumerationLimitError(RuntimeError):
    pass


@dataclass
class SolveResult:
    assignment: Assignment
    decomposition: Decomposition
    predicted_p_e2e: float
    evaluations: int = 0
    wall_time: float = 0.0
    cache_hits: int = 0
    trace: list[float] = field(default_factory=list)


class EvalCache:
    """Per-invocation memo of assignment -> (value, decomposition)."""

    def __init__(self):
        self.store: dict = {}
        self.hits = 0

    def __len__(self):
        return len(self.store)


def _shape(models) -> tuple[int, ...]:
    return tuple(len(ms) for ms in models)


def _wrap(models) -> list[list[CachedEvaluator]]:
    return [[m if isinstance(m, CachedEvaluator) else CachedEvaluator(m) for m in ms] for ms in models]


def evaluate_assignment(
    a: Assignment,
    models: Sequence[Sequence],
    d_e2e: float,
    grid_divisions: int = DEFAULT_GRID_DIVISIONS,
    cache: EvalCache | None = None,
) -> tuple[float, Decomposition]:
    key = tuple(int(j) for j in a)
    if cache is not None:
        hit = cache.store.get(key)
        if hit is not None:
            cache.hits += 1
            return hit
    evals = [models[i][j] for i, j in enumerate(key)]
    decomposition, value = decompose(evals, d_e2e, grid_divisions)
    result = (value, decomposition)
    if cache is not None:
        cache.store[key] = result
    return result


def random_assignment(shape: Sequence[int], rng: np.random.Generator) -> Assignment:
    return tuple(int(rng.integers(n)) for n in shape)


def perturb(a: Assignment, shape: Sequence[int], p_mu: float, rng: np.random.Generator) -> Assignment:
    """Redraw each domain's provider uniformly (current one included) with probability ``p_mu``."""
    if not 0.0 <= p_mu <= 1.0:
        raise ValueError(f"p_mu must lie in [0, 1], got {p_mu}")
    out = list(a)
    for i, n in enumerate(shape):
        if rng.random() < p_mu:
            out[i] = int(rng.integers(n))
    return tuple(out)


def local_search(
    a: Assignment,
    models,
    d_e2e: float,
    rng: np.random.Generator,
    cache: EvalCache,
    grid_divisions: int = DEFAULT_GRID_DIVISIONS,
) -> Assignment:
    """One pass over the domains in random order, trying every provider in each.

    A domain switches provider only on strict improvement; among equal values the
    lowest index wins.
    """
    current = list(a)
    best_value, _ = evaluate_assignment(tuple(current), models, d_e2e, grid_divisions, cache)
    for i in rng.permutation(len(models)):
        best_j = current[i]
        for j in range(len(models[i])):
            if j == best_j:
                continue
            current[i] = j
            value, _ = evaluate_assignment(tuple(current), models, d_e2e, grid_divisions, cache)
            if value > best_value:
                best_value, best_j = value, j
        current[i] = best_j
    return tuple(current)


def rails_solve(
    models,
    d_e2e: float,
    iterations: int | None = None,
    p_mu: float = DEFAULT_P_MU,
    rng: np.random.Generator | None = None,
    grid_divisions: int = DEFAULT_GRID_DIVISIONS,
) -> SolveResult:
    """Iterated local search over provider assignments.

    ``iterations`` defaults to the total number of providers. ``trace`` holds the
    best value after the initial local search and after every outer iteration.
    """
    t0 = time.perf_counter()
    models = _wrap(models)
    shape = _shape(models)
    if iterations is None:
        iterations = sum(shape)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    cache = EvalCache()

    best = local_search(random_assignment(shape, rng), models, d_e2e, rng, cache, grid_divisions)
    best_value, _ = evaluate_assignment(best, models, d_e2e, grid_divisions, cache)
    trace = [best_value]
    for it in range(iterations):
        candidate = local_search(perturb(best, shape, p_mu, rng), models, d_e2e, rng, cache, grid_divisions)
        value, _ = evaluate_assignment(candidate, models, d_e2e, grid_divisions, cache)
        if value > best_value:
            best, best_value = candidate, value
        trace.append(best_value)
        log.debug("rails iter=%d candidate=%.6f best=%.6f evals=%d hits=%d",
                  it, value, best_value, len(cache), cache.hits)
    best_value, decomposition = evaluate_assignment(best, models, d_e2e, grid_divisions, cache)
    return SolveResult(best, decomposition, best_value, len(cache), time.perf_counter() - t0, cache.hits, trace)


def _exhaustive(models, d_e2e: float, grid_divisions: int, t0: float) -> SolveResult:
    models = _wrap(models)
    shape = _shape(models)
    total = math.prod(shape)
    if total > ENUMERATION_LIMIT:
        raise EnumerationLimitError(f"{total} assignments exceed the enumeration limit of {ENUMERATION_LIMIT}")
    cache = EvalCache()
    best, best_value, best_dec = None, -1.0, None
    # product() yields assignments in lexicographic order, so strict '>' keeps the smallest on ties
    for a in itertools.product(*(range(n) for n in shape)):
        value, dec = evaluate_assignment(a, models, d_e2e, grid_divisions, cache)
        if value > best_value:
            best, best_value, best_dec = a, value, dec
    return SolveResult(best, best_dec, best_value, len(cache), time.perf_counter() - t0, cache.hits, [best_value])


def raes_solve(models, d_e2e: float, grid_divisions: int = DEFAULT_GRID_DIVISIONS) -> SolveResult:
    """Exhaustive search over all assignments under the risk models."""
    t0 = time.perf_counter()
    return _exhaustive(models, d_e2e, grid_divisions, t0)


def ground_truth_evaluators(env: Environment, t: int) -> list[list[GroundTruthEvaluator]]:
    return [[GroundTruthEvaluator(p, t) for p in providers] for providers in env.domains]


def opt_solve(env: Environment, t: int, d_e2e: float, grid_divisions: int = DEFAULT_GRID_DIVISIONS) -> SolveResult:
    """Exhaustive search with the true acceptance curves at time ``t``."""
    t0 = time.perf_counter()
    return _exhaustive(ground_truth_evaluators(env, t), d_e2e, grid_divisions, t0)


def nra_solve(shape: Sequence[int], d_e2e: float, rng: np.random.Generator, models=None) -> SolveResult:
    """Random provider per domain and an even budget split.

    ``models`` is only used to report a predicted probability for the choice made.
    """
    t0 = time.perf_counter()
    if len(shape) < 1:
        raise ValueError("need at least one domain")
    a = random_assignment(shape, rng)
    n = len(shape)
    delays = tuple(d_e2e / n for _ in range(n))
    wall = time.perf_counter() - t0
    predicted = math.nan
    if models is not None:
        predicted = product_value([models[i][j] for i, j in enumerate(a)], delays)
    return SolveResult(a, Decomposition(delays), predicted, 0, wall)
