import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oparch.function_space import make_basis
from oparch.model import CccParams

settings.register_profile("oparch", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("oparch")


@pytest.fixture(scope="session")
def ou50():
    return make_basis("ou", 50)


@pytest.fixture(scope="session")
def bm50():
    return make_basis("bm", 50)


@pytest.fixture(scope="session")
def low_dim(ou50):
    """Low-dimensional OU configuration with Delta equal to C_eps."""
    return CccParams.from_arrays("ou", ou50.eigenvalues[:2], [[0.7, 0.7]])


@pytest.fixture(scope="session")
def mild_ou(ou50):
    """Strong ARCH effect with finite fourth moments on both frequencies."""
    return CccParams.from_arrays("ou", ou50.eigenvalues[:2], [[0.6, 3.0]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
