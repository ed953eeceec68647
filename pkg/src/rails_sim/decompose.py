"""Split an end-to-end delay budget across domains.

For a fixed provider per domain, find delays ``d_1..d_N >= 0`` summing to the
budget that maximize the product of per-domain acceptance probabilities. A
coarse grid over the simplex picks a starting point; a projected ascent on the
log objective then polishes it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
DEFAULT_GRID_DIVISIONS = 20

Evaluator = Callable  # delay(s) in ms -> probability(ies)


@dataclass(frozen=True)
class Decomposition:
    delays: tuple[float, ...]

    def __len__(self):
        return len(self.delays)

    def total(self) -> float:
        return float(sum(self.delays))

    def is_feasible(self, d_e2e: float, tol: float = 1e-6) -> bool:
        return min(self.delays) >= 0.0 and abs(self.total() - d_e2e) <= tol


class CachedEvaluator:
    """Wraps an evaluator and memoizes its values on grid point arrays."""

    __slots__ = ("fn", "_grid")

    def __init__(self, fn: Evaluator):
        self.fn = fn
        self._grid = {}

    def __call__(self, d):
        return self.fn(d)

    def on_grid(self, d_e2e: float, divisions: int) -> np.ndarray:
        key = (d_e2e, divisions)
        vals = self._grid.get(key)
        if vals is None:
            vals = np.asarray(self.fn(grid_points(d_e2e, divisions)), dtype=float)
            self._grid[key] = vals
        return vals


def grid_points(d_e2e: float, divisions: int) -> np.ndarray:
    return np.arange(divisions + 1) * (d_e2e / divisions)


@lru_cache(maxsize=64)
def compositions(n: int, total: int) -> np.ndarray:
    """All ways to write ``total`` as an ordered sum of ``n`` nonnegative ints.

    Rows come out in ascending lexicographic order.
    """
    if n == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = compositions(n - 1, total - first)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    out = np.vstack(blocks)
    out.flags.writeable = False
    return out


def _values_on_grid(ev, d_e2e: float, divisions: int) -> np.ndarray:
    if isinstance(ev, CachedEvaluator):
        return ev.on_grid(d_e2e, divisions)
    return np.asarray(ev(grid_points(d_e2e, divisions)), dtype=float)


def _exact_split(d: np.ndarray, d_e2e: float) -> np.ndarray:
    d = np.maximum(d, 0.0)
    d[int(np.argmax(d))] += d_e2e - d.sum()
    return d


def joint(evals: Sequence[Evaluator]):
    """Evaluate all domains at once: maps a ``(K, N)`` delay array to ``(K, N)`` probabilities.

    Evaluators of one type exposing a ``stacked`` constructor are fused into a
    single vectorized call; anything else is evaluated column by column.
    """
    fns = [e.fn if isinstance(e, CachedEvaluator) else e for e in evals]
    kind = type(fns[0])
    stacker = getattr(kind, "stacked", None)
    if stacker is not None and all(type(f) is kind for f in fns):
        return stacker(fns)

    def columns(D):
        return np.column_stack([np.asarray(f(D[:, i]), dtype=float) for i, f in enumerate(fns)])

    return columns


def product_value(evals: Sequence[Evaluator], delays: Sequence[float]) -> float:
    value = 1.0
    for ev, d in zip(evals, delays):
        value *= float(ev(float(d)))
    return value


def grid_search(evals: Sequence[Evaluator], d_e2e: float, grid_divisions: int = DEFAULT_GRID_DIVISIONS):
    """Best grid composition of ``grid_divisions`` equal units; ties go to the lexicographically smallest."""
    n = len(evals)
    if n < 1 or d_e2e <= 0 or grid_divisions < 1:
        raise ValueError("need at least one domain, a positive budget and >= 1 grid division")
    if n == 1:
        return Decomposition((float(d_e2e),)), float(evals[0](float(d_e2e)))
    comps = compositions(n, grid_divisions)
    prod = np.ones(len(comps))
    for i, ev in enumerate(evals):
        prod *= _values_on_grid(ev, d_e2e, grid_divisions)[comps[:, i]]
    best = int(np.argmax(prod))
    delays = comps[best] * (d_e2e / grid_divisions)
    delays = _exact_split(delays.astype(float), d_e2e)
    return Decomposition(tuple(float(x) for x in delays)), float(prod[best])


def _log_obj(vals):
    return np.log(np.maximum(vals, LOG_FLOOR))


def _project(g: np.ndarray, d: np.ndarray):
    """Project ``g`` onto ``sum(delta) = 0``, freezing coordinates pinned at zero.

    Returns ``None`` when fewer than two coordinates remain free.
    """
    direction = g - g.mean()
    if d.min() > 0.0:
        return direction
    free = np.ones(len(g), dtype=bool)
    while True:
        pinned = free & (d <= 0.0) & (direction < 0.0)
        if not pinned.any():
            break
        free &= ~pinned
        if free.sum() < 2:
            return None
        direction = np.where(free, g - g[free].mean(), 0.0)
    return direction


def refine(
    evals: Sequence[Evaluator],
    start: Decomposition,
    d_e2e: float,
    max_iter: int = 100,
    tol: float = 1e-6,
    fd_step: float | None = None,
    n_trials: int = 16,
):
    """Projected ascent on the summed log-probabilities under the budget constraint.

    Gradients are central differences with step ``1e-3 * d_e2e``. Each iteration
    tries step sizes ``a, a/2, a/4, ...`` and keeps the largest one that improves
    the objective. Returns the refined split and its probability product, never
    worse than ``start``.
    """
    n = len(evals)
    F = joint(evals)
    d = np.array(start.delays, dtype=float)
    start_vals = F(d[None, :])[0]
    start_value = float(np.prod(start_vals))
    if n == 1:
        return start, start_value
    h = 1e-3 * d_e2e if fd_step is None else fd_step
    f = float(_log_obj(start_vals).sum())
    halvings = 0.5 ** np.arange(n_trials)
    step_len = 0.1 * d_e2e
    best_vals = start_vals
    try:
        for it in range(max_iter):
            lo = np.maximum(d - h, 0.0)
            hi = np.minimum(d + h, d_e2e)
            v = _log_obj(F(np.array([lo, hi])))
            g = (v[1] - v[0]) / (hi - lo)
            direction = _project(g, d)
            if direction is None:
                break
            scale = float(np.abs(direction).max())
            if not np.isfinite(scale) or scale <= 0.0:
                break
            shrinking = direction < 0.0
            alpha_max = float(np.min(d[shrinking] / -direction[shrinking])) if shrinking.any() else np.inf
            alpha = min(alpha_max, step_len / scale)
            if alpha <= 0.0:
                break
            trials = alpha * halvings
            cand = np.maximum(d + trials[:, None] * direction, 0.0)
            cand_vals = F(cand)
            cand_f = _log_obj(cand_vals).sum(axis=1)
            better = np.flatnonzero(cand_f > f)
            if len(better) == 0:
                break
            k = int(better[0])
            improvement = float(cand_f[k] - f)
            d = _exact_split(cand[k].copy(), d_e2e)
            f = float(cand_f[k])
            best_vals = cand_vals[k]
            step_len = 2.0 * trials[k] * scale
            log.debug("refine iter=%d f=%.9g step=%.3g", it, f, trials[k])
            if improvement < tol:
                break
    except (FloatingPointError, ValueError, ZeroDivisionError):
        return start, start_value
    if not np.all(np.isfinite(d)):
        return start, start_value
    value = float(np.prod(F(d[None, :])[0])) if best_vals is not start_vals else start_value
    if value < start_value:
        return start, start_value
    return Decomposition(tuple(float(x) for x in d)), value


def decompose(evals: Sequence[Evaluator], d_e2e: float, grid_divisions: int = DEFAULT_GRID_DIVISIONS):
    """Grid search followed by local refinement; returns ``(Decomposition, probability)``."""
    start, start_value = grid_search(evals, d_e2e, grid_divisions)
    if len(evals) == 1:
        return start, start_value
    refined, value = refine(evals, start, d_e2e)
    if value > start_value:
        return refined, value
    return start, start_value
