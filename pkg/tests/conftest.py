import numpy as np
import pytest

from difflab.perturb import IID, GaussianIso, displace
from difflab.pointset import Lattice, generate_lattice

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def z2_150():
    return generate_lattice(Lattice.integer(2), 151.0)


@pytest.fixture(scope="session")
def z2_small():
    return generate_lattice(Lattice.integer(2), 40.0)


@pytest.fixture(scope="session")
def gauss01():
    return IID(GaussianIso(0.1, 2), seed=1)


@pytest.fixture(scope="session")
def pps_150(z2_150, gauss01):
    return displace(z2_150, gauss01)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
