import numpy as np
import pytest

from neelwall import Grid, RescaledParameters
from neelwall.energy import solve_wall


@pytest.fixture(scope="session")
def params():
    return RescaledParameters(kappa=1.0, epsilon=0.1, alpha=0.5)


@pytest.fixture(scope="session")
def small_wall(params):
    """Wall on the grid used for time integration (L=25, N=256)."""
    return solve_wall(params, Grid(25.0, 256))


@pytest.fixture(scope="session")
def coarse_wall(params):
    """Wall on the coarse spectral grid (L=50, N=1024)."""
    return solve_wall(params, Grid(50.0, 1024))


@pytest.fixture(scope="session")
def full_wall(params):
    """Wall at production resolution (L=200, N=4096)."""
    return solve_wall(params, Grid(200.0, 4096))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ---------------------------------------------------------------

_ACCEPTANCE = []


@pytest.fixture
def report_line():
    """Record one PASS/FAIL line; all lines are repeated in the terminal summary."""

    def record(ok: bool, name: str, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
