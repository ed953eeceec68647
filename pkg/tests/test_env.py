import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rails_sim.env import (
    ConfigError,
    Environment,
    EnvironmentConfig,
    ProviderGroundTruth,
    build_environment,
    generate_feedback,
    min_supportable_delay,
    system_load,
    true_acceptance_probability,
)

from conftest import make_provider

providers = st.builds(
    ProviderGroundTruth,
    alpha=st.floats(0, 30),
    beta=st.floats(0, 0.1),
    lam=st.floats(0.01, 2.0),
    load_base=st.floats(1, 100),
    k_static=st.floats(0, 1),
    period=st.integers(1, 100),
    phase=st.floats(0, 2 * math.pi),
)


def test_load_fully_static():
    p = make_provider(k_static=1.0, load_base=33.0)
    assert [system_load(p, t) for t in (0, 7, 21)] == [33.0] * 3


@pytest.mark.parametrize("t, expected", [(10, 40.0), (30, 20.0)])
def test_load_peaks_and_troughs(t, expected):
    p = make_provider(load_base=40.0, k_static=0.5, period=40, phase=0.0)
    assert system_load(p, t) == pytest.approx(expected, abs=1e-12)


@given(providers, st.integers(0, 10_000))
def test_load_bounds_and_period(p, t):
    load = system_load(p, t)
    eps = 1e-9 * p.load_base
    assert p.load_base * p.k_static - eps <= load <= p.load_base + eps
    assert system_load(p, t + p.period) == pytest.approx(load, rel=1e-9, abs=1e-9)


def test_min_delay_values():
    assert min_supportable_delay(make_provider(beta=0.0, alpha=2.0), 5) == 3.0
    p = make_provider(alpha=2.0, beta=0.05, k_static=1.0, load_base=40.0)
    assert min_supportable_delay(p, 0) == pytest.approx(2 + math.e**2, rel=1e-12)
    assert min_supportable_delay(make_provider(alpha=0.0), 3) >= 1.0


@given(providers, st.integers(0, 500))
def test_min_delay_floor(p, t):
    assert min_supportable_delay(p, t) >= p.alpha + 1.0


def test_acceptance_threshold_and_value(provider):
    t = 4
    dmin = min_supportable_delay(provider, t)
    assert true_acceptance_probability(provider, dmin - 1e-9, t) == 0.0
    assert true_acceptance_probability(provider, dmin, t) == 0.0
    assert true_acceptance_probability(provider, dmin + 10, t) == pytest.approx(1 - math.exp(-2), rel=1e-12)


@given(providers, st.integers(0, 300), st.floats(0, 200), st.floats(0, 200))
def test_acceptance_monotone_and_range(p, t, d1, d2):
    lo, hi = sorted((d1, d2))
    a, b = true_acceptance_probability(p, lo, t), true_acceptance_probability(p, hi, t)
    assert 0.0 <= a <= b < 1.0 or (b == 1.0 and hi - min_supportable_delay(p, t) > 30 / p.lam)
    if hi <= min_supportable_delay(p, t):
        assert b == 0.0


@given(providers, st.integers(0, 300))
def test_acceptance_continuous_at_threshold(p, t):
    dmin = min_supportable_delay(p, t)
    assert true_acceptance_probability(p, dmin + 1e-9, t) < 1e-6


def test_feedback_count_is_floor_of_load(rng):
    # load 30.9 at every step
    p = make_provider(load_base=30.9, k_static=1.0)
    assert len(generate_feedback(p, 0, rng)) == 30


def test_feedback_rejects_everything_below_threshold(rng):
    p = make_provider(alpha=120.0)
    samples = generate_feedback(p, 3, rng)
    assert samples and all(s.accepted == 0 for s in samples)
    assert all(10.0 <= s.delay <= 100.0 for s in samples)


def test_feedback_deterministic():
    p = make_provider()
    a = generate_feedback(p, 2, np.random.default_rng(7))
    b = generate_feedback(p, 2, np.random.default_rng(7))
    assert a == b


def test_feedback_acceptance_rate_matches_curve():
    p = make_provider(k_static=1.0, load_base=40.0)
    rng = np.random.default_rng(2024)
    samples = []
    while len(samples) < 20_000:
        samples += generate_feedback(p, 0, rng)
    rate = np.mean([s.accepted for s in samples])
    # mean of the curve over Uniform[10, 100], by dense quadrature
    grid = np.linspace(10, 100, 200_001)
    expected = np.trapezoid(true_acceptance_probability(p, grid, 0), grid) / 90.0
    sigma = math.sqrt(expected * (1 - expected) / len(samples))
    assert abs(rate - expected) < 4 * sigma


def test_default_environment_shape():
    env = build_environment(EnvironmentConfig(), np.random.default_rng(0))
    assert env.shape == (10, 10, 10)
    assert all(x in (0.0, 10.0, 20.0) for x in env.domain_extra_latency)
    for providers, extra in zip(env.domains, env.domain_extra_latency):
        for p in providers:
            assert extra <= p.alpha <= extra + 2.0
            assert 0.04 <= p.beta <= 0.06 and 30 <= p.load_base <= 50
            assert 30 <= p.period <= 60 and 0 <= p.phase <= math.pi
            assert p.lam == 0.2 and p.k_static == 0.5


def test_degenerate_ranges_give_identical_providers():
    cfg = EnvironmentConfig(alpha_range=(1, 1), beta_range=(0.05, 0.05), load_base_range=(40, 40),
                            period_range=(45, 45), phase_range=(0.5, 0.5))
    env = build_environment(cfg, np.random.default_rng(3))
    for providers, extra in zip(env.domains, env.domain_extra_latency):
        assert len(set(providers)) == 1
        assert providers[0].alpha == 1.0 + extra


def test_environment_deterministic_and_json_roundtrip():
    a = build_environment(EnvironmentConfig(), np.random.default_rng(99))
    b = build_environment(EnvironmentConfig(), np.random.default_rng(99))
    assert a == b
    assert Environment.from_json(a.to_json()) == a


@pytest.mark.parametrize("field, value", [
    ("alpha_range", (2.0, 1.0)),
    ("beta_range", (-0.1, 0.1)),
    ("k_static", 1.5),
    ("lam", 0.0),
    ("period_range", (0, 10)),
])
def test_bad_environment_config(field, value):
    cfg = EnvironmentConfig(**{field: value})
    with pytest.raises(ConfigError) as exc:
        build_environment(cfg, np.random.default_rng(0))
    assert any(field in path for path, _ in exc.value.errors)


def test_provider_invariants():
    with pytest.raises(ConfigError):
        make_provider(k_static=-0.1)
    with pytest.raises(ConfigError):
        make_provider(lam=0.0)
