"""Analytic ground-truth environment.

Each provider has a sinusoidal system load, a minimum supportable delay that
grows exponentially with load, and a piecewise acceptance curve above that
threshold. Feedback samples are drawn from this curve by coin flips.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

FEEDBACK_DELAY_LOW = 10.0
FEEDBACK_DELAY_HIGH = 100.0


class ConfigError(ValueError):
    """Raised for invalid configuration values.

    ``errors`` holds ``(field_path, message)`` pairs.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [("", errors)]
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" if p else m for p, m in self.errors))


@dataclass(frozen=True)
class ProviderGroundTruth:
    alpha: float  # ms, domain extra latency already included
    beta: float
    lam: float  # per ms
    load_base: float
    k_static: float
    period: int
    phase: float

    def __post_init__(self):
        errs = []
        if not 0.0 <= self.k_static <= 1.0:
            errs.append(("k_static", f"must lie in [0, 1], got {self.k_static}"))
        if not self.load_base > 0:
            errs.append(("load_base", f"must be > 0, got {self.load_base}"))
        if not self.period >= 1:
            errs.append(("period", f"must be >= 1, got {self.period}"))
        if not self.lam > 0:
            errs.append(("lam", f"must be > 0, got {self.lam}"))
        if not self.beta >= 0:
            errs.append(("beta", f"must be >= 0, got {self.beta}"))
        if not self.alpha >= 0:
            errs.append(("alpha", f"must be >= 0, got {self.alpha}"))
        if errs:
            raise ConfigError(errs)


@dataclass(frozen=True)
class FeedbackSample:
    delay: float
    accepted: int


@dataclass
class Environment:
    domains: list[list[ProviderGroundTruth]]
    domain_extra_latency: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.domains:
            raise ConfigError([("domains", "need at least one domain")])
        for i, providers in enumerate(self.domains):
            if not providers:
                raise ConfigError([(f"domains[{i}]", "need at least one provider")])
        if not self.domain_extra_latency:
            self.domain_extra_latency = [0.0] * len(self.domains)
        if len(self.domain_extra_latency) != len(self.domains):
            raise ConfigError([("domain_extra_latency", "one entry per domain required")])

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.domains)

    def provider(self, domain: int, index: int) -> ProviderGroundTruth:
        return self.domains[domain][index]

    def to_dict(self) -> dict:
        return {
            "domain_extra_latency": list(self.domain_extra_latency),
            "domains": [[asdict(p) for p in providers] for providers in self.domains],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Environment":
        domains = [
            [ProviderGroundTruth(**{**p, "period": int(p["period"])}) for p in providers]
            for providers in data["domains"]
        ]
        return cls(domains=domains, domain_extra_latency=list(data["domain_extra_latency"]))

    def to_json(self) -> str:
        # json uses repr() for floats, which round-trips exactly
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Environment":
        return cls.from_dict(json.loads(text))


def system_load(p: ProviderGroundTruth, t):
    """Load at time step ``t``, between ``load_base * k_static`` and ``load_base``."""
    wave = (1.0 + np.sin(2.0 * math.pi * np.asarray(t, dtype=float) / p.period + p.phase)) / 2.0
    load = p.load_base * p.k_static + p.load_base * (1.0 - p.k_static) * wave
    return float(load) if np.ndim(load) == 0 else load


def min_supportable_delay(p: ProviderGroundTruth, t):
    return p.alpha + np.exp(p.beta * system_load(p, t))


def acceptance_curve(d, d_min: float, lam: float):
    """Piecewise acceptance: zero below ``d_min``, saturating exponential above."""
    d = np.asarray(d, dtype=float)
    excess = d - d_min
    # -expm1(-x) == 1 - exp(-x), accurate for small x
    out = np.where(excess >= 0.0, -np.expm1(-lam * np.maximum(excess, 0.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def true_acceptance_probability(p: ProviderGroundTruth, d, t):
    return acceptance_curve(d, float(min_supportable_delay(p, t)), p.lam)


class GroundTruthEvaluator:
    """Acceptance probability of one provider frozen at time ``t``."""

    __slots__ = ("d_min", "lam")

    def __init__(self, p: ProviderGroundTruth, t: int):
        self.d_min = float(min_supportable_delay(p, t))
        self.lam = p.lam

    def __call__(self, d):
        return acceptance_curve(d, self.d_min, self.lam)


class StackedGroundTruth:
    __slots__ = ("d_min", "lam")

    def __init__(self, evals):
        self.d_min = np.array([e.d_min for e in evals])
        self.lam = np.array([e.lam for e in evals])

    def __call__(self, D):
        excess = D - self.d_min
        return np.where(excess >= 0.0, -np.expm1(-self.lam * np.maximum(excess, 0.0)), 0.0)


GroundTruthEvaluator.stacked = StackedGroundTruth


def generate_feedback(p: ProviderGroundTruth, t: int, rng: np.random.Generator) -> list[FeedbackSample]:
    n = int(math.floor(system_load(p, t)))
    delays, accepted = sample_feedback_arrays(p, t, n, rng)
    return [FeedbackSample(float(d), int(a)) for d, a in zip(delays, accepted)]


def sample_feedback_arrays(p: ProviderGroundTruth, t: int, n: int, rng: np.random.Generator):
    """Array form of feedback sampling: ``n`` uniform delays and coin-flip outcomes."""
    delays = rng.uniform(FEEDBACK_DELAY_LOW, FEEDBACK_DELAY_HIGH, size=n)
    probs = np.atleast_1d(true_acceptance_probability(p, delays, t))
    accepted = (rng.random(n) < probs).astype(np.int8)
    return delays, accepted


@dataclass
class EnvironmentConfig:
    """Sampling ranges for provider parameters. Defaults give the 3x10 reference setup."""

    n_domains: int = 3
    providers_per_domain: int | list[int] = 10
    alpha_range: tuple[float, float] = (0.0, 2.0)
    beta_range: tuple[float, float] = (0.04, 0.06)
    load_base_range: tuple[float, float] = (30.0, 50.0)
    period_range: tuple[int, int] = (30, 60)
    phase_range: tuple[float, float] = (0.0, math.pi)
    lam: float = 0.2
    k_static: float = 0.5
    domain_extra_latency_choices: tuple[float, ...] = (0.0, 10.0, 20.0)

    def provider_counts(self) -> list[int]:
        if isinstance(self.providers_per_domain, int):
            return [self.providers_per_domain] * self.n_domains
        return list(self.providers_per_domain)

    def validate(self, prefix: str = "") -> list[tuple[str, str]]:
        errs = []

        def bad(name, msg):
            errs.append((prefix + name, msg))

        if not isinstance(self.n_domains, int) or self.n_domains < 1:
            bad("n_domains", "must be an integer >= 1")
        counts = self.providers_per_domain
        if isinstance(counts, int):
            if counts < 1:
                bad("providers_per_domain", "must be >= 1")
        else:
            if len(counts) != self.n_domains:
                bad("providers_per_domain", "list length must equal n_domains")
            if any((not isinstance(c, int)) or c < 1 for c in counts):
                bad("providers_per_domain", "every entry must be an integer >= 1")
        for name in ("alpha_range", "beta_range", "load_base_range", "period_range", "phase_range"):
            rng = getattr(self, name)
            if len(rng) != 2:
                bad(name, "must be a [low, high] pair")
                continue
            lo, hi = rng
            if lo > hi:
                bad(name, f"empty interval [{lo}, {hi}]")
            if lo < 0:
                bad(name, f"negative bound {lo}")
        if self.load_base_range[0] <= 0:
            bad("load_base_range", "baseline load must be > 0")
        if self.period_range[0] < 1 or any(int(v) != v for v in self.period_range):
            bad("period_range", "periods must be integers >= 1")
        if not self.lam > 0:
            bad("lam", "must be > 0")
        if not 0.0 <= self.k_static <= 1.0:
            bad("k_static", "must lie in [0, 1]")
        if not self.domain_extra_latency_choices:
            bad("domain_extra_latency_choices", "must be non-empty")
        elif any(c < 0 for c in self.domain_extra_latency_choices):
            bad("domain_extra_latency_choices", "latencies must be >= 0")
        return errs


def build_environment(cfg: EnvironmentConfig, rng: np.random.Generator) -> Environment:
    errs = cfg.validate()
    if errs:
        raise ConfigError(errs)
    counts = cfg.provider_counts()
    choices = np.asarray(cfg.domain_extra_latency_choices, dtype=float)
    extra = [float(choices[rng.integers(len(choices))]) for _ in counts]
    domains = []
    for n_providers, shift in zip(counts, extra):
        providers = []
        for _ in range(n_providers):
            alpha = rng.uniform(*cfg.alpha_range)
            beta = rng.uniform(*cfg.beta_range)
            load_base = rng.uniform(*cfg.load_base_range)
            period = int(rng.integers(int(cfg.period_range[0]), int(cfg.period_range[1]) + 1))
            phase = rng.uniform(*cfg.phase_range)
            providers.append(
                ProviderGroundTruth(
                    alpha=float(alpha) + shift,
                    beta=float(beta),
                    lam=float(cfg.lam),
                    load_base=float(load_base),
                    k_static=float(cfg.k_static),
                    period=period,
                    phase=float(phase),
                )
            )
        domains.append(providers)
    return Environment(domains=domains, domain_extra_latency=extra)


def e2e_probability(evals: Sequence, delays: Sequence[float]) -> float:
    """Product of per-domain acceptance probabilities."""
    out = 1.0
    for ev, d in zip(evals, delays):
        out *= float(ev(float(d)))
    return out
