import warnings

import pytest
from hypothesis import HealthCheck, settings

from nvloc.spin_model import RegimeWarning, SpinConstants
from nvloc.wire_field import NVAxis, WireGeometry

settings.register_profile("nvloc", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nvloc")

NV1 = (-83.9e-9, -8.6e-9)
NV2 = (-122.6e-9, -29.2e-9)
NV3 = (-152.3e-9, -20.6e-9)


@pytest.fixture
def consts():
    return SpinConstants()


@pytest.fixture
def geom():
    return WireGeometry()


@pytest.fixture
def axis():
    return NVAxis.from_crystal()


@pytest.fixture
def no_regime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RegimeWarning)
        yield


# acceptance outcomes, filled by test_acceptance.py and echoed after the run
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
