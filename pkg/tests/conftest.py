import numpy as np
import pytest
from hypothesis import settings

from gaussholes import IndexedCovariance, IsotropicKernel

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

R0_EXAMPLE = 0.5
SIGMA_EXAMPLE = 0.8


def example_covariance(r0=R0_EXAMPLE, sigma=SIGMA_EXAMPLE):
    """X(0) = Y1, X(1) = r0 Y1, X(2) = sigma Y1 + Y2 for independent standard normals."""
    return IndexedCovariance(np.array([
        [1.0, r0, sigma],
        [r0, r0 * r0, r0 * sigma],
        [sigma, r0 * sigma, sigma * sigma + 1.0],
    ]))


def two_point_covariance(corr=0.8):
    return IndexedCovariance(np.array([[1.0, corr], [corr, 1.0]]))


@pytest.fixture
def se():
    return IsotropicKernel("squared-exponential")


@pytest.fixture
def ou():
    return IsotropicKernel("exponential")


@pytest.fixture
def example_cov():
    return example_covariance()


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
