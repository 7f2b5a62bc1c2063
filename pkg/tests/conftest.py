import numpy as np
import pytest

from pomcpe.domains import long_hallway_model, tiger_model


def make_rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture(scope="session")
def tiger():
    return tiger_model()


@pytest.fixture(scope="session")
def hallway():
    return long_hallway_model(1, 1)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
