import pytest

from sturmlog.cfrac import RotationNumber
from sturmlog.sturmian import PotentialSpec


@pytest.fixture(scope="session")
def golden():
    return RotationNumber.golden()


@pytest.fixture(scope="session")
def silver():
    return RotationNumber.silver()


@pytest.fixture(scope="session")
def fib1(golden):
    return PotentialSpec.sturmian(1.0, golden, 0)


@pytest.fixture(scope="session")
def free():
    return PotentialSpec.free()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
