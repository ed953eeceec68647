import numpy as np
import pytest
from hypothesis import settings

from rails_sim.env import ProviderGroundTruth

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def make_provider(**kw):
    base = dict(alpha=2.0, beta=0.05, lam=0.2, load_base=40.0, k_static=0.5, period=40, phase=0.0)
    base.update(kw)
    return ProviderGroundTruth(**base)


@pytest.fixture
def provider():
    return make_provider()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
