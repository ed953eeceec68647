#!/usr/bin/env python3
"""Compare the exhaustive solvers against a fine brute-force split on small instances.

    python3 scripts/oracle_check.py [--instances 20] [--step 0.01]
"""

import argparse
import itertools

import numpy as np

from rails_sim.env import EnvironmentConfig, build_environment
from rails_sim.search import ground_truth_evaluators, opt_solve


def brute_force(evals, d_e2e, step):
    d1 = np.arange(0.0, d_e2e + step / 2, step)
    return float(np.max(evals[0](d1) * evals[1](d_e2e - d1)))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--d-e2e", type=float, default=100.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for k in range(args.instances):
        env = build_environment(EnvironmentConfig(n_domains=2, providers_per_domain=2), rng)
        t = int(rng.integers(0, 100))
        truth = ground_truth_evaluators(env, t)
        oracle = max(brute_force([truth[0][i], truth[1][j]], args.d_e2e, args.step)
                     for i, j in itertools.product(range(2), range(2)))
        got = opt_solve(env, t, args.d_e2e).predicted_p_e2e
        worst = max(worst, abs(got - oracle))
        print(f"instance {k:3d} t={t:3d} solver={got:.6f} oracle={oracle:.6f} diff={got - oracle:+.2e}")
    print(f"max |diff| = {worst:.2e}")


if __name__ == "__main__":
    main()
