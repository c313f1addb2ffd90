import sys

import numpy as np
import pytest

from kinetic_spaces.structure import langevin, resolve_operator


@pytest.fixture(scope="session")
def g1():
    return langevin(1)


@pytest.fixture(scope="session")
def g2():
    return langevin(2)


@pytest.fixture(scope="session")
def g3():
    return resolve_operator("three_layer")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.LINES):
        terminalreporter.write_line(line)
