import numpy as np
import pytest

from rabi_sidebands.hamiltonian import QubitSpec, SystemConfig, paper_modes
from rabi_sidebands.operators import ModeSpec


@pytest.fixture(scope="session")
def device():
    """Measured modes 1 and 3 with the default qubit (N1, N3) = (8, 6)."""
    return SystemConfig(QubitSpec(), paper_modes())


@pytest.fixture(scope="session")
def small_device():
    return SystemConfig(QubitSpec(), paper_modes(truncations=(5, 2, 4)))


@pytest.fixture
def single_mode():
    return SystemConfig(QubitSpec(), (ModeSpec(1, 3.143, 0.05, 8),))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
