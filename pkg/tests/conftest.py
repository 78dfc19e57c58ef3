import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geopower.models import builtin_model

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DIAVACC = np.array([80.0, 12.0, 44.0, 64.0])
Y1 = np.array([1.0, 9.0, 9.0, 33.0])
Y2 = np.array([3.0, 7.0, 7.0, 35.0])


def vaccine_closed_form(y):
    """Closed-form multinomial MLE of the vaccine model."""
    s1 = 3 * y[0] + 2 * y[1] + y[2]
    s2 = y[1] + y[2] + y[3]
    t = s1 + s2
    return np.array([(s1 / t) ** 3, s1 ** 2 * s2 / t ** 3, s1 * s2 / t ** 2, s2 / t])


def independence_fit(y):
    """Row total times column total over N squared, 2x2 cells in row-major order."""
    t = np.asarray(y, dtype=float).reshape(2, 2)
    n = t.sum()
    return (np.outer(t.sum(axis=1), t.sum(axis=0)) / n ** 2).ravel()


@pytest.fixture
def vaccine():
    return builtin_model("vaccine")


@pytest.fixture
def indep():
    return builtin_model("indep2x2")


def random_instance(rng, max_cells=6):
    """Random full-rank non-negative integer design plus a positive q."""
    from geopower.design import exact_rank
    while True:
        n = int(rng.integers(2, max_cells + 1))
        j = int(rng.integers(1, n))
        a = rng.integers(0, 4, size=(n, j))
        if exact_rank(a.T.tolist()) == j and np.all(a.sum(axis=1) > 0):
            q = rng.gamma(1.0, size=n) + 0.01
            return a, q


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
