import numpy as np
import pytest

from etcabs.bounds import compute_timings
from etcabs.design import make_design
from etcabs.model_io import PlantSpec
from etcabs.partition import make_cones
from etcabs.taylor import build_tables, estimate_eta

SIGMA, L, N_CONV, M_BAR, PSI = 8.0, 800, 7, 10, 100.0


def example_plant(W=1e-3, **kw):
    return PlantSpec(A=[[0, 1], [-2, 3]], B=[[0], [1]], E=[[0], [1]], W=W, gamma=100,
                     beta=0.25, **kw)


@pytest.fixture(scope="session")
def plant():
    return example_plant()


@pytest.fixture(scope="session")
def design(plant):
    return make_design(plant, PSI)


@pytest.fixture(scope="session")
def tables(design, plant):
    return estimate_eta(build_tables(design, plant.W, SIGMA, L, N_CONV), design, 10)


@pytest.fixture(scope="session")
def regions():
    return make_cones(M_BAR)


@pytest.fixture(scope="session")
def timings(regions, tables):
    return compute_timings(regions, tables)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines are collected here and printed after the run --------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
