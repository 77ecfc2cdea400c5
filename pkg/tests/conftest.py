import numpy as np
import pytest

from elvol import PopulationFrame, ScenarioConfig, generate_population


@pytest.fixture(scope="session")
def m1_frame():
    return generate_population(ScenarioConfig("M1", n_units=2000, seed=7), 0)


@pytest.fixture(scope="session")
def m2_frame():
    return generate_population(ScenarioConfig("M2", n_units=2000, seed=7), 0)


def toy_frame(n=40, seed=0, p=2):
    """Small frame with an x-driven selection (every unit has a y for oracles)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    y = x.sum(axis=1) + rng.normal(size=n)
    delta = (rng.random(n) < 0.5).astype(int)
    delta[:2] = [1, 0]
    return PopulationFrame(x, delta, np.where(delta == 1, y, np.nan))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
