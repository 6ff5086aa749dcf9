import numpy as np
import pytest

from segproc.geometry import Configuration
from segproc.numerics import make_rng


def random_configuration(n, seed=0, length=0.3, size=1.0):
    rng = make_rng(seed, 99)
    return Configuration(size * rng.random(n), size * rng.random(n), np.full(n, length), np.pi * rng.random(n))


@pytest.fixture
def rng():
    return make_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
