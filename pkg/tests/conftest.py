import numpy as np
import pytest

from fzmoo.param_space import default_space


@pytest.fixture(scope="session")
def space():
    return default_space()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


def unit_point(space, u):
    """Physical point with every normalised coordinate equal to ``u`` (or a 12-vector of them)."""
    u = np.broadcast_to(np.asarray(u, dtype=float), (12,))
    return space.low + u * (space.high - space.low)


ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
