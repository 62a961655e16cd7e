import math

import numpy as np
import pytest

from rauzylab.iet_core import Permutation
from rauzylab.presets import build_context, resolve_iet

ACCEPTANCE = {}


def record(number, name, passed, detail=""):
    """Store the outcome of one acceptance criterion for the terminal summary."""
    ACCEPTANCE[number] = (name, bool(passed), detail)


@pytest.fixture(scope="session")
def golden():
    perm, lam, preset = resolve_iet("d2-golden")
    return build_context(perm, lam, preset=preset, seed=1)


@pytest.fixture(scope="session")
def golden_base(golden):
    return golden.base


@pytest.fixture(scope="session")
def generic_p0(golden):
    return golden.generic_center()


@pytest.fixture(scope="session")
def fixed_p0():
    phi = (1 + math.sqrt(5)) / 2
    return np.array([2 - phi, phi - 1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def swap():
    return Permutation.from_rows("AB/BA")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {k:2d} {name}: {detail}")
