import math

import numpy as np
import pytest

from dvsopt import GridModel, InverterLimits, compute_thresholds, PER_UNIT

R, X = 0.089443, 0.044721


@pytest.fixture
def case_a():
    return GridModel(0.4, R, X), InverterLimits(1.5, 0.9656)


@pytest.fixture
def case_b():
    return GridModel(0.4, R, X), InverterLimits(1.5, 0.3816)


@pytest.fixture
def case_c():
    return GridModel(0.08, R, X), InverterLimits(1.5, 0.0924)


def random_problem(rng: np.random.Generator):
    """A grid and limits spread across all three stages."""
    vg = rng.uniform(0.05, 0.9)
    scr = rng.uniform(2.0, 10.0)
    g = GridModel.from_scr(vg, scr, rng.uniform(0.3, 4.0))
    i_max = rng.uniform(1.0, 2.0)
    th = compute_thresholds(g, PER_UNIT, InverterLimits(i_max, 1.0))
    p_max = th.p_b * rng.uniform(0.02, 1.5)
    return g, InverterLimits(i_max, p_max)


def pct(a, b):
    return 100.0 * abs(a - b) / abs(b) if b else math.inf


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
