import numpy as np
import pytest

from pacs.imaging import Grid
from pacs.sampling import CSOperator, make_scheme
from pacs.wave import SensorArc, WaveOperator


@pytest.fixture(scope="session")
def desk_grid():
    return Grid(64)


@pytest.fixture(scope="session")
def desk_wave(desk_grid):
    return WaveOperator(desk_grid, SensorArc(64), 160)


@pytest.fixture(scope="session")
def small_wave():
    # coarse geometry for fast unit tests
    return WaveOperator(Grid(24), SensorArc(16), 48)


@pytest.fixture(scope="session")
def sparse_op(desk_wave):
    return CSOperator(desk_wave, make_scheme("sparse", 16, 64))


@pytest.fixture(scope="session")
def bernoulli_op(desk_wave):
    return CSOperator(desk_wave, make_scheme("bernoulli", 16, 64, seed=1))


@pytest.fixture(scope="session")
def small_op(small_wave):
    return CSOperator(small_wave, make_scheme("sparse", 4, 16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(config.acceptance_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
