"""Brute-force reference solvers used only by the tests."""

import itertools

import numpy as np


def brute_force_split(evals, d_e2e, step=0.01):
    """Max of the probability product over a fine grid of the simplex (N <= 3)."""
    n_units = int(round(d_e2e / step))
    pts = np.arange(n_units + 1) * step
    vals = [np.asarray(ev(pts), dtype=float) for ev in evals]
    if len(evals) == 1:
        return vals[0][-1], (d_e2e,)
    if len(evals) == 2:
        prod = vals[0] * vals[1][::-1]
        k = int(np.argmax(prod))
        return prod[k], (pts[k], d_e2e - pts[k])
    if len(evals) == 3:
        best, arg = -1.0, None
        for i in range(n_units + 1):
            rest = n_units - i
            prod = vals[0][i] * vals[1][: rest + 1] * vals[2][rest::-1]
            k = int(np.argmax(prod))
            if prod[k] > best:
                best, arg = prod[k], (pts[i], pts[k], d_e2e - pts[i] - pts[k])
        return best, arg
    raise ValueError("brute force supports at most 3 domains")


def brute_force_joint(models, d_e2e, step=0.01):
    """Best (value, assignment) over every assignment and a fine split grid."""
    best, arg = -1.0, None
    for a in itertools.product(*(range(len(ms)) for ms in models)):
        value, _ = brute_force_split([models[i][j] for i, j in enumerate(a)], d_e2e, step)
        if value > best:
            best, arg = value, a
    return best, arg
