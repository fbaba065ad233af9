import numpy as np
import pytest

from hall_lab.hamiltonian import harper_spec
from hall_lab.lattice import TorusLattice

# acceptance outcomes, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def impurity_harper(L, N, U=0.5, flux_q=None, impurity=3.0, t=1.0):
    """Harper model with flux 2 pi / q and one impurity at the origin (lifts the magnetic-translation degeneracy)."""
    lat = TorusLattice(L)
    onsite = np.zeros(lat.n_sites)
    onsite[lat.index((0, 0))] = impurity
    q = L if flux_q is None else flux_q
    return harper_spec(L, t, 2 * np.pi / q, U, 0.0, N, onsite=onsite)


@pytest.fixture(scope="session")
def l3_preset():
    return impurity_harper(3, 2, U=0.5)


@pytest.fixture(scope="session")
def l3_free():
    return impurity_harper(3, 2, U=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
