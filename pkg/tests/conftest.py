import numpy as np
import pytest
from hypothesis import settings

from accelrelax.field import GridSpec, random_field
from accelrelax.flows import FlowSpec

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture
def grid32():
    return GridSpec(32)


@pytest.fixture
def grid64():
    return GridSpec(64)


@pytest.fixture
def shear_flow():
    return FlowSpec.alternating_shear(1.0, 1.0, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def smooth_field(grid64):
    return random_field(grid64, 3, decay=2.0)


ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    """Record one summary line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
