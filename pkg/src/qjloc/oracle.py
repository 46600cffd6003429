"""Brute-force reference in full particle coordinates (r_1, ..., r_N).

Everything here acts on the N-dimensional configuration grid directly:
multipliers are built from sum_j exp(i q r_j), free evolution uses
exp(-i dt sum_j k_j^2), and relative densities are obtained by summing
over the first particle's position. Nothing is imported from the
relative-coordinate code path apart from the grid/parameter containers,
so agreement between the two is a real check. Small grids only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import KineticPropagator
from .scattering import CouplingConfig, ThetaGrid, non_scatter_amplitude_field
from .state import DensityGrid, GridSpec, Wavefunction, density, init_uniform
from .trajectory import scripted_step

MAX_POINTS = 2**24


@dataclass
class FullWavefunction:
    grid: GridSpec  # dim == number of particles
    amplitudes: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.grid.dim

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.cell_volume))


def _full_grid(m: int, length: float, n_particles: int) -> GridSpec:
    if m**n_particles > MAX_POINTS:
        raise ValueError(f"{m}^{n_particles} points is too large for the brute-force oracle")
    return GridSpec(n_particles, m, length)


def full_init_uniform(m: int, length: float, n_particles: int) -> FullWavefunction:
    grid = _full_grid(m, length, n_particles)
    amp = np.full(grid.shape, 1.0 / np.sqrt(length**n_particles), dtype=np.complex128)
    return FullWavefunction(grid, amp)


def embed(psi: Wavefunction) -> FullWavefunction:
    """Full-coordinate state with a uniform centre of mass and psi's relative part."""
    rel = psi.grid
    n = psi.n_particles
    grid = _full_grid(rel.m, rel.length, n)
    idx = np.indices(grid.shape)
    rel_idx = tuple((idx[j] - idx[0]) % rel.m for j in range(1, n))
    r1 = idx[0] * grid.dx
    amp = np.exp(1j * psi.twist * r1) * psi.amplitudes[rel_idx] / np.sqrt(rel.length)
    return FullWavefunction(grid, amp)


def _normalized(psi: FullWavefunction, amp: np.ndarray) -> FullWavefunction:
    out = FullWavefunction(psi.grid, amp)
    n = out.norm()
    if n == 0:
        raise ZeroDivisionError("projection annihilated the state")
    out.amplitudes = amp / n
    return out


def phasor_sum(grid: GridSpec, q: float) -> np.ndarray:
    """sum_j exp(i q r_j) on the full grid."""
    x = grid.positions()
    out = np.zeros(grid.shape, dtype=np.complex128)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.m
        out = out + np.exp(1j * q * x).reshape(shape)
    return out


def full_apply_scatter(psi: FullWavefunction, q: float) -> FullWavefunction:
    return _normalized(psi, phasor_sum(psi.grid, q) * psi.amplitudes)


def full_non_scatter_field(grid: GridSpec, thetas: ThetaGrid, coupling: CouplingConfig) -> np.ndarray:
    """A(R), summing every angular bin separately."""
    total = np.zeros(grid.shape)
    for q, w in zip(thetas.applied_q(grid), thetas.weights):
        total += w * np.abs(phasor_sum(grid, q)) ** 2
    return np.sqrt(1.0 - coupling.prefactor * total)


def full_apply_non_scatter(psi: FullWavefunction, amplitude: np.ndarray) -> FullWavefunction:
    return _normalized(psi, amplitude * psi.amplitudes)


def full_scattering_distribution(psi: FullWavefunction, thetas: ThetaGrid, coupling: CouplingConfig) -> np.ndarray:
    """Direct quadrature of (g^2/2pi) dtheta int dR |phi(R) sum_j exp(i q_b r_j)|^2 per bin."""
    out = np.empty(thetas.n_bins)
    for b, (q, w) in enumerate(zip(thetas.applied_q(psi.grid), thetas.weights)):
        field = psi.amplitudes * phasor_sum(psi.grid, q)
        out[b] = coupling.prefactor * w * np.sum(np.abs(field) ** 2) * psi.grid.cell_volume
    return out


def full_kinetic_phase(grid: GridSpec, dt: float) -> np.ndarray:
    k = grid.momenta()
    total = np.zeros(grid.shape)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.m
        total = total + (k**2).reshape(shape)
    return np.exp(-1j * dt * total)


def full_free_evolve(psi: FullWavefunction, dt: float) -> FullWavefunction:
    if dt == 0:
        return FullWavefunction(psi.grid, psi.amplitudes.copy())
    amp = np.fft.ifftn(np.fft.fftn(psi.amplitudes) * full_kinetic_phase(psi.grid, dt))
    return FullWavefunction(psi.grid, amp)


def marginal_relative_density(psi: FullWavefunction) -> DensityGrid:
    """Density of (r_2 - r_1, ..., r_N - r_1) on the periodic grid."""
    grid = psi.grid
    m = grid.m
    rho = np.abs(psi.amplitudes) ** 2
    idx = np.indices(grid.shape)
    rel_flat = np.zeros(grid.shape, dtype=np.int64)
    for j in range(1, grid.dim):
        rel_flat = rel_flat * m + (idx[j] - idx[0]) % m
    out = np.bincount(rel_flat.ravel(), weights=rho.ravel(), minlength=m ** (grid.dim - 1))
    rel_grid = GridSpec(grid.dim - 1, m, grid.length)
    return DensityGrid(rel_grid, out.reshape(rel_grid.shape) * grid.dx)


@dataclass
class OracleReport:
    n_particles: int
    m: int
    max_density_error: list[float]

    @property
    def worst(self) -> float:
        return max(self.max_density_error) if self.max_density_error else 0.0


def default_script(grid: GridSpec, thetas: ThetaGrid, n_events: int = 10, seed: int = 7) -> list[float | None]:
    """A fixed mix of non-scatter (None) and scatter outcomes drawn from the bin set."""
    rng = np.random.Generator(np.random.PCG64(seed))
    q = thetas.applied_q(grid)
    nonzero = q[q != 0]
    script: list[float | None] = []
    for i in range(n_events):
        script.append(None if i % 3 == 1 else float(rng.choice(nonzero)))
    return script


def compare_scripted(
    n_particles: int,
    m: int,
    length: float,
    script: list[float | None],
    thetas: ThetaGrid | None = None,
    coupling: CouplingConfig | None = None,
    dt: float = 0.0,
) -> OracleReport:
    """Run one outcome script through both pipelines; record the max density error per step."""
    thetas = thetas or ThetaGrid(64)
    coupling = coupling or CouplingConfig(0.9 / n_particles)
    rel_grid = GridSpec(n_particles - 1, m, length)
    full = full_init_uniform(m, length, n_particles)
    rel = init_uniform(rel_grid, n_particles)
    a_rel = non_scatter_amplitude_field(rel_grid, thetas, coupling, n_particles)
    a_full = full_non_scatter_field(full.grid, thetas, coupling)
    prop = KineticPropagator(rel_grid, dt, n_particles) if dt > 0 else None
    errors = []
    for q in script:
        full = full_apply_non_scatter(full, a_full) if q is None else full_apply_scatter(full, q)
        full = full_free_evolve(full, dt)
        rel = scripted_step(rel, q, a_rel, prop)
        diff = marginal_relative_density(full).values - density(rel).values
        errors.append(float(np.max(np.abs(diff))))
    return OracleReport(n_particles, m, errors)


def oracle_check(n_events: int = 10, dt: float = 0.05) -> list[OracleReport]:
    """The standard pair of checks: two particles on 64^2, three on 16^3."""
    reports = []
    for n, m, length in ((2, 64, 20.0), (3, 16, 12.0)):
        thetas = ThetaGrid(64)
        script = default_script(GridSpec(n, m, length), thetas, n_events)
        reports.append(compare_scripted(n, m, length, script, thetas, CouplingConfig(0.9 / n), dt))
    return reports
