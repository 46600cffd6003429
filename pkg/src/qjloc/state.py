"""Relative-coordinate wavefunctions on a periodic grid.

Units throughout: positions in 1/k_i, momenta in k_i, times in 2m/(hbar k_i^2).

A wavefunction of N particles is stored in the N-1 relative coordinates
x_j = r_{j+1} - r_1. Momentum kicks from scattering give the state a definite
total momentum P; in relative coordinates this shows up as a plane-wave factor
exp(-i P/N sum_j x_j) that is not periodic on the box. We keep that factor
implicit (``twist``) and store only the periodic part, so every stored field
lives exactly on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft

POSITION = "position"
MOMENTUM = "momentum"


@dataclass(frozen=True)
class GridSpec:
    """Periodic D-dimensional grid with M points of spacing L/M per axis."""

    dim: int
    m: int
    length: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.m < 16 or self.m & (self.m - 1):
            raise ValueError(f"m must be a power of two >= 16, got {self.m}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.m

    @property
    def dk(self) -> float:
        return 2 * np.pi / self.length

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.m,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    def positions(self) -> np.ndarray:
        """Grid coordinates along one axis, in [0, L)."""
        return np.arange(self.m) * self.dx

    def momentum_indices(self) -> np.ndarray:
        """Integer lattice indices n in FFT order, n in [-M/2, M/2)."""
        return np.fft.fftfreq(self.m, d=1.0 / self.m).astype(np.int64)

    def momenta(self) -> np.ndarray:
        """Conjugate momentum lattice 2 pi n / L, FFT order."""
        return self.momentum_indices() * self.dk

    def mesh(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        x = self.positions()
        out = []
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.m
            out.append(x.reshape(shape))
        return out

    def lattice_index(self, q: float, tol: float = 1e-9) -> int:
        """Integer n with q = n * dk; raises if q is off the lattice."""
        n = round(q / self.dk)
        if abs(n * self.dk - q) > tol * max(1.0, abs(q)):
            raise ValueError(f"momentum {q!r} is not on the lattice of spacing {self.dk!r}")
        return int(n)


@dataclass
class Wavefunction:
    """Relative-coordinate state of ``n_particles`` particles.

    ``amplitudes`` holds the periodic part of the wavefunction, in position
    or momentum representation. ``twist`` is the total momentum (a lattice
    value) carried by the whole system; relative momenta of the stored
    momentum components are shifted by -twist/N.
    """

    grid: GridSpec
    amplitudes: np.ndarray
    n_particles: int
    representation: str = POSITION
    twist: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        if self.grid.dim != self.n_particles - 1:
            raise ValueError(
                f"{self.n_particles} particles need a {self.n_particles - 1}-dimensional grid, "
                f"got dim={self.grid.dim}"
            )
        if self.amplitudes.shape != self.grid.shape:
            raise ValueError(f"amplitude shape {self.amplitudes.shape} != grid shape {self.grid.shape}")
        if self.representation not in (POSITION, MOMENTUM):
            raise ValueError(f"unknown representation {self.representation!r}")

    def copy(self) -> Wavefunction:
        return replace(self, amplitudes=self.amplitudes.copy())

    def with_amplitudes(self, amplitudes: np.ndarray, **changes) -> Wavefunction:
        return replace(self, amplitudes=amplitudes, **changes)


@dataclass
class DensityGrid:
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def total(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)


def _measure(psi: Wavefunction) -> float:
    if psi.representation == POSITION:
        return psi.grid.cell_volume
    return psi.grid.dk**psi.grid.dim


def norm(psi: Wavefunction) -> float:
    """L2 norm with the grid measure of the current representation."""
    return float(np.sqrt(np.vdot(psi.amplitudes, psi.amplitudes).real * _measure(psi)))


def normalize(psi: Wavefunction) -> Wavefunction:
    n = norm(psi)
    if n == 0 or not np.isfinite(n):
        raise ZeroNormError(f"cannot normalize a state with norm {n}")
    return psi.with_amplitudes(psi.amplitudes / n)


class ZeroNormError(RuntimeError):
    """A projection annihilated the state."""


def init_uniform(grid: GridSpec, n_particles: int) -> Wavefunction:
    """Constant, real, normalized state over the whole box."""
    amp = 1.0 / np.sqrt(grid.length**grid.dim)
    return Wavefunction(grid, np.full(grid.shape, amp, dtype=np.complex128), n_particles)


def gaussian_state(grid: GridSpec, n_particles: int, center, sigma: float, momentum=None) -> Wavefunction:
    """Normalized periodic Gaussian packet (minimum-image distance to ``center``)."""
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    k0 = np.zeros(grid.dim) if momentum is None else np.broadcast_to(np.asarray(momentum, float), (grid.dim,))
    amp = np.ones(grid.shape, dtype=np.complex128)
    for axis, x in enumerate(grid.mesh()):
        d = (x - center[axis] + grid.length / 2) % grid.length - grid.length / 2
        amp = amp * np.exp(-(d**2) / (4 * sigma**2) + 1j * k0[axis] * x)
    return normalize(Wavefunction(grid, amp, n_particles))


def _momentum_scale(grid: GridSpec) -> float:
    # Unitary between sum |a|^2 dx^D and sum |phi|^2 dk^D.
    return (grid.dx / np.sqrt(2 * np.pi)) ** grid.dim


def to_momentum(psi: Wavefunction) -> Wavefunction:
    if psi.representation != POSITION:
        raise ValueError("to_momentum expects a position-representation wavefunction")
    phi = sfft.fftn(psi.amplitudes) * _momentum_scale(psi.grid)
    return psi.with_amplitudes(phi, representation=MOMENTUM)


def to_position(psi: Wavefunction) -> Wavefunction:
    if psi.representation != MOMENTUM:
        raise ValueError("to_position expects a momentum-representation wavefunction")
    a = sfft.ifftn(psi.amplitudes) / _momentum_scale(psi.grid)
    return psi.with_amplitudes(a, representation=POSITION)


def relative_momenta(psi: Wavefunction) -> list[np.ndarray]:
    """Physical relative momentum along each axis for the stored components."""
    shift = psi.twist / psi.n_particles
    k = psi.grid.momenta() - shift
    out = []
    for axis in range(psi.grid.dim):
        shape = [1] * psi.grid.dim
        shape[axis] = psi.grid.m
        out.append(k.reshape(shape))
    return out


def density(psi: Wavefunction) -> DensityGrid:
    if psi.representation != POSITION:
        raise ValueError("density expects a position-representation wavefunction")
    return DensityGrid(psi.grid, np.abs(psi.amplitudes) ** 2, psi.time)


def momentum_density(psi: Wavefunction) -> np.ndarray:
    if psi.representation == POSITION:
        psi = to_momentum(psi)
    return np.abs(psi.amplitudes) ** 2


def momentum_spread(psi: Wavefunction) -> float:
    """sqrt of the trace of the relative-momentum covariance."""
    w = momentum_density(psi)
    w = w / w.sum()
    total = 0.0
    for k in relative_momenta(psi):
        mean = float((w * k).sum())
        total += float((w * (k - mean) ** 2).sum())
    return float(np.sqrt(total))


# Images of (x1, x2) under relabelling three particles, x1 = r2 - r1, x2 = r3 - r1.
_S3_MAPS = (
    ((1, 0), (0, 1)),
    ((0, 1), (1, 0)),
    ((-1, 0), (-1, 1)),
    ((1, -1), (0, -1)),
    ((-1, 1), (-1, 0)),
    ((0, -1), (1, -1)),
)


def symmetry_images(point, length: float) -> list[tuple[float, float]]:
    """Orbit of a relative-coordinate point under particle relabelling.

    Only defined for three particles (two relative coordinates). Images
    are reduced into [0, length).
    """
    if len(point) != 2:
        raise ValueError("symmetry images are defined for two relative coordinates only")
    x1, x2 = point
    return [
        ((a * x1 + b * x2) % length, (c * x1 + d * x2) % length)
        for (a, b), (c, d) in _S3_MAPS
    ]


def symmetry_index_images(i1, i2, m: int) -> list[tuple]:
    """Same orbit on integer grid indices (mod m); works on arrays too."""
    return [((a * i1 + b * i2) % m, (c * i1 + d * i2) % m) for (a, b), (c, d) in _S3_MAPS]


def apply_symmetry_map(values: np.ndarray, which: int) -> np.ndarray:
    """Pull a 2D field back through one of the six relabelling maps."""
    m = values.shape[0]
    i1, i2 = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    j1, j2 = symmetry_index_images(i1, i2, m)[which]
    return values[j1, j2]


def exchange_asymmetry(psi: Wavefunction) -> float:
    """max |rho(x1, x2) - rho(x2, x1)| over the grid."""
    if psi.grid.dim != 2:
        raise ValueError("exchange asymmetry needs two relative coordinates")
    rho = density(psi).values
    return float(np.max(np.abs(rho - rho.T)))
