import numpy as np
import pytest
from hypothesis import settings

from viscoshell.geometry import cylinder, graph, hemisphere_patch, plate
from viscoshell.material import MaterialParams

settings.register_profile("repo", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("repo")

GRAPH_H = "0.3*sin(2*y1)*cos(y2) + 0.2*y1**2*y2"

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def plate_chart():
    return plate(1.0, 1.0)


@pytest.fixture(scope="session")
def cyl():
    return cylinder(1.0)


@pytest.fixture(scope="session")
def sphere():
    return hemisphere_patch()


@pytest.fixture(scope="session")
def graph_chart():
    return graph(GRAPH_H)


@pytest.fixture
def unit_mat():
    return MaterialParams(1.0, 1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
