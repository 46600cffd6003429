"""Measurement operators for probe scattering off N particles on a line.

Scattering is confined to a plane, so angles are 1D and the per-angle
prefactor is g^2 / (2 pi). A detected scatter with momentum transfer q
multiplies the N-particle state by sum_j exp(i q r_j); a detected
non-scatter multiplies it by the amplitude A(R) fixed by probe-number
conservation.

Momentum transfers are snapped to the conjugate lattice of the box
(multiples of 2 pi / L). Off-lattice kicks are not periodic on the box and
would tear the wavefunction at the seam.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .state import POSITION, GridSpec, Wavefunction, ZeroNormError, normalize

AXIAL = "axial"
PERPENDICULAR = "perpendicular"


class FeasibilityError(ValueError):
    """Coupling too strong: the non-scattering probability would go negative."""


def momentum_transfer(theta, geometry: str = AXIAL):
    """Momentum transfer along the particle axis for scattering angle theta."""
    theta = np.asarray(theta, dtype=float)
    if geometry == AXIAL:
        q = 1.0 - np.cos(theta)
    elif geometry == PERPENDICULAR:
        q = np.sin(theta)
    else:
        raise ValueError(f"unknown geometry {geometry!r}")
    return q if q.ndim else float(q)


@dataclass(frozen=True)
class ThetaGrid:
    """Uniform bins over (-pi, pi]; ``angles`` are the representative angles.

    Representative angles are -pi + (b + 1) * dtheta, so both theta = 0
    (forward, no recoil) and theta = pi are present when n_bins is even.
    """

    n_bins: int = 256
    geometry: str = AXIAL

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")
        if self.geometry not in (AXIAL, PERPENDICULAR):
            raise ValueError(f"unknown geometry {self.geometry!r}")

    @property
    def dtheta(self) -> float:
        return 2 * np.pi / self.n_bins

    @property
    def angles(self) -> np.ndarray:
        return -np.pi + (np.arange(self.n_bins) + 1) * self.dtheta

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_bins, self.dtheta)

    @property
    def q(self) -> np.ndarray:
        return momentum_transfer(self.angles, self.geometry)

    def lattice_indices(self, grid: GridSpec) -> np.ndarray:
        """Per-bin momentum transfer as an integer multiple of the grid's dk."""
        return np.rint(self.q / grid.dk).astype(np.int64)

    def applied_q(self, grid: GridSpec) -> np.ndarray:
        return self.lattice_indices(grid) * grid.dk


@dataclass(frozen=True)
class CouplingConfig:
    g: float = float(np.sqrt(0.1 / 3))

    @property
    def prefactor(self) -> float:
        """Scattering probability per unit angle per unit structure factor."""
        return self.g**2 / (2 * np.pi)

    def is_feasible(self, n_particles: int) -> bool:
        return self.g**2 * n_particles**2 <= 1.0

    def check(self, n_particles: int) -> None:
        if not self.is_feasible(n_particles):
            raise FeasibilityError(
                f"g={self.g} with N={n_particles} violates g^2 N^2 <= 1 "
                f"({self.g**2 * n_particles**2:.4g})"
            )


def _pairs(n_particles: int):
    """Index pairs (i, j) over particles; particle 0 sits at the origin."""
    return list(itertools.combinations(range(n_particles), 2))


def _separation(coords, i: int, j: int):
    # coords[k] is the relative coordinate of particle k + 1.
    xj = coords[j - 1]
    return xj if i == 0 else xj - coords[i - 1]


def structure_amplitude(grid: GridSpec, q: float, n_particles: int) -> np.ndarray:
    """1 + sum_j exp(i q x_j): the periodic part of the scatter multiplier."""
    out = np.ones(grid.shape, dtype=np.complex128)
    for x in grid.mesh():
        out = out + np.exp(1j * q * x)
    return out


def relative_phase_factor(grid: GridSpec, q: float, n_particles: int) -> np.ndarray:
    """Scatter multiplier in relative coordinates with the centre of mass removed.

    exp(-i q/N sum_j x_j) (1 + sum_j exp(i q x_j)). The leading phase is not
    periodic on the box unless q N / dk is an integer; the propagation code
    carries it as a twist instead of storing it.
    """
    _check_dim(grid, n_particles)
    total = sum(grid.mesh())
    return np.exp(-1j * q * total / n_particles) * structure_amplitude(grid, q, n_particles)


def structure_factor_field(grid: GridSpec, q: float, n_particles: int) -> np.ndarray:
    """|sum_j exp(i q r_j)|^2 as a function of the relative coordinates."""
    _check_dim(grid, n_particles)
    coords = grid.mesh()
    s = np.full(grid.shape, float(n_particles))
    for i, j in _pairs(n_particles):
        s = s + 2 * np.cos(q * _separation(coords, i, j))
    return s


def _check_dim(grid: GridSpec, n_particles: int) -> None:
    if grid.dim != n_particles - 1:
        raise ValueError(f"{n_particles} particles need dim {n_particles - 1}, got {grid.dim}")


def pair_marginals(values: np.ndarray, n_particles: int) -> list[np.ndarray]:
    """Marginal distribution of every pair separation (index differences mod M)."""
    m = values.shape[0]
    dim = values.ndim
    out = []
    for i, j in _pairs(n_particles):
        if i == 0:
            axes = tuple(a for a in range(dim) if a != j - 1)
            out.append(values.sum(axis=axes) if axes else values.copy())
        else:
            sep = _separation_index(m, dim, i, j)
            out.append(np.bincount(sep, weights=values.ravel(), minlength=m))
    return out


@lru_cache(maxsize=16)
def _separation_index(m: int, dim: int, i: int, j: int) -> np.ndarray:
    idx = np.indices((m,) * dim)
    sep = ((idx[j - 1] - idx[i - 1]) % m).ravel()
    sep.flags.writeable = False
    return sep


def _grouped_weights(thetas: ThetaGrid, grid: GridSpec):
    """Unique lattice transfers and, per bin, which group it belongs to."""
    n = thetas.lattice_indices(grid)
    unique, inverse = np.unique(n, return_inverse=True)
    return unique, inverse


def scattering_distribution(psi: Wavefunction, thetas: ThetaGrid, coupling: CouplingConfig) -> np.ndarray:
    """Probability of detecting a scatter into each angular bin.

    Uses S = N + 2 sum_pairs cos(q d_pair), so only the 1D marginals of
    the pair separations enter the integral.
    """
    if psi.representation != POSITION:
        raise ValueError("scattering_distribution expects a position-representation state")
    grid = psi.grid
    rho = np.abs(psi.amplitudes) ** 2
    mass = rho.sum() * grid.cell_volume
    unique, inverse = _grouped_weights(thetas, grid)
    x = grid.positions()
    expect = np.full(unique.shape, float(psi.n_particles) * mass)
    cos_table = np.cos(np.outer(unique * grid.dk, x))
    for marg in pair_marginals(rho, psi.n_particles):
        expect += 2 * grid.cell_volume * (cos_table @ marg)
    probs = coupling.prefactor * thetas.weights * expect[inverse]
    total = probs.sum()
    if total > 1.0 + 1e-12:
        raise FeasibilityError(f"total scattering probability {total:.6g} exceeds 1")
    return probs


def total_scatter_field(grid: GridSpec, thetas: ThetaGrid, coupling: CouplingConfig, n_particles: int) -> np.ndarray:
    """(g^2 / 2 pi) sum_b dtheta S(X; q_b), the scatter probability of a position eigenstate."""
    unique, inverse = _grouped_weights(thetas, grid)
    group_w = np.bincount(inverse, weights=thetas.weights, minlength=unique.size)
    out = np.zeros(grid.shape)
    for n, w in zip(unique, group_w):
        out += w * structure_factor_field(grid, n * grid.dk, n_particles)
    return coupling.prefactor * out


def non_scatter_amplitude_field(
    grid: GridSpec, thetas: ThetaGrid, coupling: CouplingConfig, n_particles: int
) -> np.ndarray:
    """A(X) = sqrt(1 - total scatter probability at X)."""
    radicand = 1.0 - total_scatter_field(grid, thetas, coupling, n_particles)
    low = radicand.min()
    if low < 0:
        raise FeasibilityError(f"non-scattering probability goes negative (min {low:.4g}); g is too large")
    return np.sqrt(radicand)


def apply_scatter(psi: Wavefunction, q: float) -> Wavefunction:
    """Project on a detected scatter with lattice momentum transfer q, renormalized."""
    if psi.representation != POSITION:
        raise ValueError("apply_scatter expects a position-representation state")
    psi.grid.lattice_index(q)
    if q == 0:
        return psi.copy()
    amp = structure_amplitude(psi.grid, q, psi.n_particles) * psi.amplitudes
    out = psi.with_amplitudes(amp, twist=psi.twist + q)
    try:
        return normalize(out)
    except ZeroNormError as exc:
        raise ZeroNormError(f"scatter projection with q={q} annihilated the state") from exc


def apply_non_scatter(psi: Wavefunction, amplitude: np.ndarray) -> Wavefunction:
    """Project on a detected non-scatter, renormalized."""
    if psi.representation != POSITION:
        raise ValueError("apply_non_scatter expects a position-representation state")
    try:
        return normalize(psi.with_amplitudes(amplitude * psi.amplitudes))
    except ZeroNormError as exc:
        raise ZeroNormError("non-scatter projection annihilated the state") from exc
