import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from levysdde import AtomsLevy, DelayMeasure, HistorySegment
from levysdde.dynamics import cubic_example

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def mu_atom():
    return DelayMeasure.atom(-0.3)


@pytest.fixture
def cubic(mu_atom):
    return cubic_example(mu_atom)


@pytest.fixture
def two_atoms():
    """+-0.2 with mass 3 and +-1.5 with mass 0.1."""
    return AtomsLevy.from_positive_half([0.2, 1.5], [3.0, 0.1])


@pytest.fixture
def small_atoms():
    return AtomsLevy.from_positive_half([0.2], [3.0])


@pytest.fixture
def xi_half():
    return HistorySegment.constant(0.5, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_norm(seg, n=100_000):
    """Reference ``||seg||_r`` from a dense grid plus the tail and node values."""
    th = np.linspace(seg.theta_min, 0.0, n)
    vals = np.linalg.norm(seg(th), axis=1) * np.exp(seg.r * th)
    nodes = np.linalg.norm(seg.values, axis=1) * np.exp(seg.r * seg.times)
    return max(vals.max(), nodes.max(), float(np.linalg.norm(seg.tail)))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
