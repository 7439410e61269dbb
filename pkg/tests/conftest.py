import numpy as np
import pytest

from danadisinfo.stats import ConfusionMatrix

# Annotator agreement matrices printed in the source tables.
FOUR_CLASS = [[15, 1, 0, 2], [1, 13, 1, 1], [3, 4, 28, 5], [4, 2, 3, 36]]
TWO_CLASS = [[66, 8], [9, 36]]
COLLAPSE = {"0": "0", "1": "0", "2": "0", "3": "1"}

ACCEPTANCE_LINES = []


@pytest.fixture
def four_class():
    return ConfusionMatrix(("0", "1", "2", "3"), np.array(FOUR_CLASS))


@pytest.fixture
def two_class():
    return ConfusionMatrix(("0", "1"), np.array(TWO_CLASS))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
