"""Free evolution between detection events, exact in momentum space.

With particle momenta k_1..k_N and total P, the relative kinetic energy is
sum_j k_j^2 - P^2/N; for three particles this is 2 (q1^2 + q2^2 + q1 q2)
in terms of the relative momenta conjugate to x1, x2. The stored lattice
index along axis j is the momentum of particle j + 1; particle 1 carries
the remainder P - sum_j k_{j+1}, folded back into the lattice band the way
an N-particle ring on the same grid would. Inside the band this is the
closed form exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .state import POSITION, GridSpec, Wavefunction, to_momentum, to_position


def _fold(n: np.ndarray, m: int) -> np.ndarray:
    """Map integer lattice indices into the FFT band [-m/2, m/2)."""
    return (n + m // 2) % m - m // 2


@dataclass(frozen=True)
class KineticPhase:
    grid: GridSpec
    dt: float
    n_particles: int
    twist_index: int
    phase: np.ndarray = field(repr=False, compare=False)


class KineticPropagator:
    """Builds kinetic phase fields for one (grid, dt, N), reusing the pieces
    that do not depend on the accumulated total momentum."""

    def __init__(self, grid: GridSpec, dt: float, n_particles: int):
        if grid.dim != n_particles - 1:
            raise ValueError(f"{n_particles} particles need dim {n_particles - 1}, got {grid.dim}")
        if dt < 0:
            raise ValueError("dt must be non-negative")
        self.grid = grid
        self.dt = float(dt)
        self.n_particles = n_particles
        n = grid.momentum_indices()
        k = n * grid.dk
        base = np.ones(grid.shape, dtype=np.complex128)
        total = np.zeros(grid.shape, dtype=np.int64)
        for axis in range(grid.dim):
            shape = [1] * grid.dim
            shape[axis] = grid.m
            base = base * np.exp(-1j * self.dt * k**2).reshape(shape)
            total = total + n.reshape(shape)
        self._base = base
        self._sum_index = total % grid.m
        self._cache: dict[int, KineticPhase] = {}

    def exponent(self, twist_index: int = 0) -> np.ndarray:
        """Relative kinetic energy on the lattice (the phase is exp(-i dt E))."""
        grid = self.grid
        k_axes = grid.momenta()
        energy = np.zeros(grid.shape)
        for axis in range(grid.dim):
            shape = [1] * grid.dim
            shape[axis] = grid.m
            energy = energy + (k_axes**2).reshape(shape)
        first = _fold(twist_index - self._sum_index, grid.m) * grid.dk
        return energy + first**2 - (twist_index * grid.dk) ** 2 / self.n_particles

    def phase(self, twist_index: int = 0) -> KineticPhase:
        cached = self._cache.get(twist_index)
        if cached is not None:
            return cached
        grid = self.grid
        t = np.arange(grid.m)
        first = _fold(twist_index - t, grid.m) * grid.dk
        lookup = np.exp(-1j * self.dt * first**2)
        offset = np.exp(1j * self.dt * (twist_index * grid.dk) ** 2 / self.n_particles)
        ph = self._base * lookup[self._sum_index] * offset
        kp = KineticPhase(grid, self.dt, self.n_particles, twist_index, ph)
        if len(self._cache) >= 8:
            self._cache.pop(next(iter(self._cache)))
        self._cache[twist_index] = kp
        return kp


def kinetic_phase(grid: GridSpec, dt: float, n_particles: int, twist_index: int = 0) -> KineticPhase:
    return KineticPropagator(grid, dt, n_particles).phase(twist_index)


def free_evolve(psi: Wavefunction, phase: KineticPhase) -> Wavefunction:
    """Evolve by phase.dt under the free Hamiltonian; returns position representation."""
    if phase.grid != psi.grid or phase.n_particles != psi.n_particles:
        raise ValueError("kinetic phase was built for a different grid or particle number")
    if psi.grid.lattice_index(psi.twist) != phase.twist_index:
        raise ValueError("kinetic phase twist does not match the state's total momentum")
    if phase.dt == 0:
        return psi.copy() if psi.representation == POSITION else to_position(psi)
    mom = psi if psi.representation != POSITION else to_momentum(psi)
    mom = mom.with_amplitudes(mom.amplitudes * phase.phase)
    out = to_position(mom)
    out.time = psi.time + phase.dt
    return out


def evolve(psi: Wavefunction, dt: float, propagator: KineticPropagator | None = None) -> Wavefunction:
    """Convenience wrapper: free evolution by dt with a matching phase."""
    if propagator is None or propagator.dt != dt or propagator.grid != psi.grid:
        propagator = KineticPropagator(psi.grid, dt, psi.n_particles)
    return free_evolve(psi, propagator.phase(psi.grid.lattice_index(psi.twist)))
