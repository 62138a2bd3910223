import numpy as np
import pytest

from ftlab.grid import DomainSpec, build_domain


@pytest.fixture
def interval64():
    return build_domain(DomainSpec("interval", 1, 1 / 64))


@pytest.fixture
def box8():
    return build_domain(DomainSpec("box", 2, 1 / 8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    """Store and print one PASS/FAIL line; the terminal summary repeats them in order."""
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
