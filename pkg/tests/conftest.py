import os
import sys

import numpy as np
import pytest

from vortexeq import conformal_torus, flat_torus, round_sphere

sys.path.insert(0, os.path.dirname(__file__))


def bump(x, y):
    return 0.1 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)


@pytest.fixture(scope="session")
def torus():
    return flat_torus()


@pytest.fixture(scope="session")
def sphere():
    return round_sphere()


@pytest.fixture(scope="session")
def ctorus():
    return conformal_torus(bump)


@pytest.fixture(scope="session", params=["torus", "sphere", "ctorus"])
def surface(request):
    return request.getfixturevalue(request.param)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
