import numpy as np
import pytest

from qjloc.state import GridSpec, Wavefunction, normalize


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(grid: GridSpec, n_particles: int, rng, symmetric: bool = False) -> Wavefunction:
    amp = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    if symmetric and grid.dim == 2:
        amp = amp + amp.T
    return normalize(Wavefunction(grid, amp, n_particles))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
