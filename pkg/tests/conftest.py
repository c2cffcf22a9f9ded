import numpy as np
import pytest

from propcal import DgpConfig, generate

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def dgp10k():
    return generate(DgpConfig(n=10_000, gamma=1.0, seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
