import numpy as np
import pytest
from hypothesis import settings

from srtrack import eikonal as E

# first calls compile numba kernels, so wall-clock deadlines are meaningless
settings.register_profile("srtrack", deadline=None)
settings.load_profile("srtrack")


@pytest.fixture(scope="session")
def so3_grid():
    return E.Grid3D.so3(41, 81, 81)


@pytest.fixture(scope="session")
def so3_map(so3_grid):
    return E.solve(E.MetricSpec(1.5, 0.1), so3_grid, stop_value=2.0)


@pytest.fixture(scope="session")
def cuspless_map(so3_grid):
    return E.solve(E.MetricSpec(1.5, 0.1, cuspless=True), so3_grid, stop_value=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
