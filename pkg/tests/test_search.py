import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rails_sim.decompose import decompose, product_value
from rails_sim.env import Environment, EnvironmentConfig, GroundTruthEvaluator, build_environment
from rails_sim.search import (
    EnumerationLimitError,
    EvalCache,
    evaluate_assignment,
    ground_truth_evaluators,
    local_search,
    nra_solve,
    opt_solve,
    perturb,
    raes_solve,
    rails_solve,
)

from conftest import make_provider
from oracles import brute_force_joint


def curve(dmin, lam=0.2):
    return GroundTruthEvaluator(make_provider(alpha=dmin, beta=0.0, lam=lam), 0)  # d_min = dmin + 1


def random_models(rng, shape):
    return [[curve(rng.uniform(0, 30), rng.uniform(0.05, 0.4)) for _ in range(n)] for n in shape]


def zero(d):
    return np.zeros_like(np.asarray(d, dtype=float))


def test_evaluate_single_provider_equals_decompose():
    ev = curve(5.0)
    value, dec = evaluate_assignment((0,), [[ev]], 100.0)
    assert (dec, value) == decompose([ev], 100.0)


def test_evaluate_cache_hits():
    models = random_models(np.random.default_rng(0), (3, 3))
    cache = EvalCache()
    first = evaluate_assignment((1, 2), models, 100.0, cache=cache)
    assert cache.hits == 0 and len(cache) == 1
    assert evaluate_assignment((1, 2), models, 100.0, cache=cache) == first
    assert cache.hits == 1


def test_evaluate_zero_domain_annihilates():
    models = [[curve(3.0)], [zero]]
    value, _ = evaluate_assignment((0, 0), models, 100.0)
    assert value == 0.0


def test_perturb_identity_cases():
    rng = np.random.default_rng(1)
    assert perturb((3, 1, 4), (10, 10, 10), 0.0, rng) == (3, 1, 4)
    assert perturb((0, 0, 0), (1, 1, 1), 1.0, rng) == (0, 0, 0)
    with pytest.raises(ValueError):
        perturb((0,), (2,), 1.5, rng)


def test_perturb_redraw_is_uniform_including_current():
    rng = np.random.default_rng(2)
    draws = np.array([perturb((0,), (4,), 1.0, rng)[0] for _ in range(8000)])
    freq = np.bincount(draws, minlength=4) / len(draws)
    np.testing.assert_allclose(freq, 0.25, atol=0.02)
    kept = np.mean([perturb((0,), (4,), 0.8, rng)[0] == 0 for _ in range(8000)])
    assert kept == pytest.approx(0.2 + 0.8 * 0.25, abs=0.02)


def test_local_search_single_provider_identity():
    models = [[curve(1.0)], [curve(2.0)]]
    assert local_search((0, 0), models, 100.0, np.random.default_rng(0), EvalCache()) == (0, 0)


def test_local_search_single_domain_argmax():
    models = [[curve(30.0), curve(5.0), curve(15.0)]]
    assert local_search((0,), models, 100.0, np.random.default_rng(0), EvalCache()) == (1,)


@given(st.integers(0, 2**32 - 1))
def test_local_search_reaches_swap_optimum_2x2(seed):
    rng = np.random.default_rng(seed)
    models = random_models(rng, (2, 2))
    start = (int(rng.integers(2)), int(rng.integers(2)))
    cache = EvalCache()
    out = local_search(start, models, 100.0, rng, cache)
    value = evaluate_assignment(out, models, 100.0, cache=cache)[0]
    assert value >= evaluate_assignment(start, models, 100.0, cache=cache)[0]
    # a single swap can only still improve the domain visited first, and only
    # if the other domain moved after it was optimized
    for i in range(2):
        for j in range(2):
            alt = list(out)
            alt[i] = j
            alt_value = evaluate_assignment(tuple(alt), models, 100.0, cache=cache)[0]
            if alt_value > value:
                assert out[1 - i] != start[1 - i]


def test_rails_default_iterations_and_trace():
    models = random_models(np.random.default_rng(3), (10, 10, 10))
    res = rails_solve(models, 100.0, rng=np.random.default_rng(4))
    assert len(res.trace) == 31
    assert all(b >= a for a, b in zip(res.trace, res.trace[1:]))
    assert res.predicted_p_e2e == res.trace[-1]
    assert res.decomposition.is_feasible(100.0)


def test_rails_single_provider_is_plain_decompose():
    evs = [curve(3.0), curve(12.0), curve(8.0)]
    res = rails_solve([[e] for e in evs], 100.0, iterations=3, rng=np.random.default_rng(0))
    dec, value = decompose(evs, 100.0)
    assert res.assignment == (0, 0, 0) and res.decomposition == dec and res.predicted_p_e2e == value


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_rails_matches_exhaustive_on_tiny_instance(seed):
    rng = np.random.default_rng(seed)
    models = random_models(rng, (2, 2))
    rails = rails_solve(models, 100.0, iterations=20, rng=rng)
    raes = raes_solve(models, 100.0)
    assert rails.predicted_p_e2e == raes.predicted_p_e2e


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_solver_value_ordering(seed):
    rng = np.random.default_rng(seed)
    models = random_models(rng, (4, 3, 5))
    rails = rails_solve(models, 100.0, iterations=3, rng=np.random.default_rng(seed))
    raes = raes_solve(models, 100.0)
    assert raes.predicted_p_e2e >= rails.predicted_p_e2e >= rails.trace[0] - 0.0
    assert all(b >= a for a, b in zip(rails.trace, rails.trace[1:]))
    # initial random assignment: replay the rng draws rails used first
    r = np.random.default_rng(seed)
    initial = tuple(int(r.integers(n)) for n in (4, 3, 5))
    assert rails.predicted_p_e2e >= evaluate_assignment(initial, models, 100.0)[0]


def test_rails_deterministic():
    models = random_models(np.random.default_rng(9), (5, 5, 5))
    a = rails_solve(models, 100.0, rng=np.random.default_rng(1))
    b = rails_solve(models, 100.0, rng=np.random.default_rng(1))
    assert (a.assignment, a.decomposition, a.predicted_p_e2e, a.trace) == (
        b.assignment, b.decomposition, b.predicted_p_e2e, b.trace)


def test_nra_even_split_and_determinism():
    res = nra_solve((10, 10, 10), 100.0, np.random.default_rng(0))
    assert res.decomposition.delays == pytest.approx((100 / 3,) * 3)
    assert [f"{d:.2f}" for d in res.decomposition.delays] == ["33.33"] * 3
    assert nra_solve((4,), 70.0, np.random.default_rng(0)).decomposition.delays == (70.0,)
    again = nra_solve((10, 10, 10), 100.0, np.random.default_rng(0))
    assert again.assignment == res.assignment


def test_raes_counts_every_assignment():
    models = random_models(np.random.default_rng(5), (10, 10, 10))
    res = raes_solve(models, 100.0)
    assert res.evaluations == 1000
    rails = rails_solve(models, 100.0, rng=np.random.default_rng(0))
    assert res.predicted_p_e2e >= rails.predicted_p_e2e


def test_raes_tie_break_lexicographic():
    models = [[zero, zero], [zero, zero, zero]]
    assert raes_solve(models, 100.0).assignment == (0, 0)


def test_enumeration_guard():
    models = [[zero] * 101] * 3
    with pytest.raises(EnumerationLimitError):
        raes_solve(models, 100.0)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_raes_and_opt_match_brute_force_2x2(seed):
    rng = np.random.default_rng(seed)
    cfg = EnvironmentConfig(n_domains=2, providers_per_domain=2)
    env = build_environment(cfg, rng)
    t = int(rng.integers(0, 100))
    truth = ground_truth_evaluators(env, t)
    oracle, _ = brute_force_joint(truth, 100.0)
    assert opt_solve(env, t, 100.0).predicted_p_e2e == pytest.approx(oracle, abs=1e-3)
    assert raes_solve(truth, 100.0).predicted_p_e2e == pytest.approx(oracle, abs=1e-3)


def test_opt_single_provider_reduces_to_decompose():
    env = Environment([[make_provider(alpha=1.0)], [make_provider(alpha=11.0, phase=1.0)]])
    res = opt_solve(env, 7, 100.0)
    truth = [GroundTruthEvaluator(p[0], 7) for p in env.domains]
    dec, value = decompose(truth, 100.0)
    assert res.assignment == (0, 0) and res.predicted_p_e2e == value


def test_opt_upper_bounds_other_methods():
    env = build_environment(EnvironmentConfig(providers_per_domain=4), np.random.default_rng(2))
    rng = np.random.default_rng(3)
    for t in (0, 13, 40):
        truth = ground_truth_evaluators(env, t)
        opt = opt_solve(env, t, 100.0)
        noisy = [[curve(rng.uniform(0, 25)) for _ in ms] for ms in truth]
        for res in (rails_solve(noisy, 100.0, rng=rng), raes_solve(noisy, 100.0),
                    nra_solve(env.shape, 100.0, rng)):
            chosen = [truth[i][j] for i, j in enumerate(res.assignment)]
            assert product_value(chosen, res.decomposition.delays) <= opt.predicted_p_e2e + 1e-3
