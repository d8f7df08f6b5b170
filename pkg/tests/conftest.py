import numpy as np
import pytest

from moe_lab.densities import GAUSSIAN_IDENTITY, STUDENT_T_IDENTITY, ComponentParams
from moe_lab.experts import IDENTITY
from moe_lab.model import ContaminatedModel

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def t2_model():
    """Student-t base, identity experts, d=8, the fixed-lambda truth."""
    d = 8
    return ContaminatedModel(
        0.5, STUDENT_T_IDENTITY, ComponentParams(np.eye(d)[0], 0.0, 4.0),
        IDENTITY, ComponentParams(np.ones(d), 1.0, 0.01),
    )


@pytest.fixture
def gauss_model():
    d = 3
    return ContaminatedModel(
        0.3, GAUSSIAN_IDENTITY, ComponentParams([1.0, 0.0, 0.0], 0.0, 1.0),
        IDENTITY, ComponentParams([0.5, -0.5, 1.0], 0.7, 0.2),
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
