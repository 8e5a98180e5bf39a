import numpy as np
import pytest

from uccap.capability import DimensionSample, SpecLimits

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_sample():
    def _make(values, lsl=None, usl=None, dim_id="D"):
        return DimensionSample(dim_id, np.asarray(values, dtype=float), SpecLimits(lsl, usl))

    return _make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
