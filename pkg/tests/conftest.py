import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from microkin.body import BodyGrid

settings.register_profile("default", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return BodyGrid.cube()


@pytest.fixture(scope="session")
def small_grid():
    return BodyGrid.cube(points=9)


def random_conn_solder(rng, n=3, scale=0.5):
    """Random lift coefficient C (3, n) and well-conditioned solder coefficient S (3, n)."""
    C = rng.normal(size=(3, n)) * scale
    S = np.eye(3)[:, :n] + rng.normal(size=(3, n)) * 0.2
    return C, S


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[num])
