import numpy as np
import pytest

from qjloc import oracle
from qjloc.evolution import KineticPropagator
from qjloc.scattering import CouplingConfig, ThetaGrid, apply_scatter, scattering_distribution
from qjloc.state import GridSpec, Wavefunction, density, gaussian_state, init_uniform, normalize

from conftest import random_state


def test_full_scatter_basics():
    full = oracle.full_init_uniform(16, 12.0, 3)
    assert full.norm() == pytest.approx(1.0, abs=1e-12)
    same = oracle.full_apply_scatter(full, 0.0)
    assert np.allclose(same.amplitudes, full.amplitudes, atol=1e-15)
    # one particle: pure phase, density unchanged
    single = oracle.FullWavefunction(GridSpec(1, 16, 12.0), np.linspace(1, 2, 16).astype(complex))
    single.amplitudes /= single.norm()
    kicked = oracle.full_apply_scatter(single, 3 * single.grid.dk)
    assert np.allclose(np.abs(kicked.amplitudes), np.abs(single.amplitudes), atol=1e-14)


def test_uniform_marginal_is_uniform():
    d = oracle.marginal_relative_density(oracle.full_init_uniform(16, 12.0, 3))
    assert np.allclose(d.values, 1 / 144, atol=1e-15)


def test_separable_state_marginal():
    rel = gaussian_state(GridSpec(2, 16, 12.0), 3, (3.0, 7.0), 1.2)
    full = oracle.embed(rel)
    assert full.norm() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(oracle.marginal_relative_density(full).values, density(rel).values, atol=1e-14)


def test_single_scatter_matches_relative_pipeline():
    grid = GridSpec(2, 16, 12.0)
    rel = init_uniform(grid, 3)
    q = 3 * grid.dk
    full = oracle.full_apply_scatter(oracle.embed(rel), q)
    err = np.max(np.abs(oracle.marginal_relative_density(full).values - density(apply_scatter(rel, q)).values))
    assert err < 1e-10


def test_distribution_matches(rng):
    grid = GridSpec(2, 16, 12.0)
    thetas = ThetaGrid(32)
    c = CouplingConfig(0.2)
    rel = random_state(grid, 3, rng, symmetric=True)
    rel = apply_scatter(rel, 2 * grid.dk)
    full = oracle.embed(rel)
    assert np.allclose(scattering_distribution(rel, thetas, c), oracle.full_scattering_distribution(full, thetas, c), rtol=1e-10, atol=1e-15)
    # uniform two-particle state
    g2 = GridSpec(1, 16, 12.0)
    u = init_uniform(g2, 2)
    assert np.allclose(
        scattering_distribution(u, thetas, c),
        oracle.full_scattering_distribution(oracle.full_init_uniform(16, 12.0, 2), thetas, c),
        rtol=1e-10,
    )


def test_point_state_distribution():
    grid = GridSpec(2, 16, 12.0)
    thetas = ThetaGrid(32)
    c = CouplingConfig(0.2)
    amp = np.zeros((16, 16, 16), complex)
    amp[2, 5, 11] = 1
    full = oracle.FullWavefunction(GridSpec(3, 16, 12.0), amp / np.sqrt(grid.dx**3))
    p = oracle.full_scattering_distribution(full, thetas, c)
    r = np.array([2, 5, 11]) * grid.dx
    expect = [c.prefactor * thetas.dtheta * abs(np.exp(1j * q * r).sum()) ** 2 for q in thetas.applied_q(grid)]
    assert np.allclose(p, expect, rtol=1e-12)


def test_kinetic_phase_separates():
    # full phase exp(-i dt sum k_j^2) = COM phase x relative phase on the lattice
    m, length, dt = 16, 12.0, 0.07
    full = oracle.full_kinetic_phase(GridSpec(3, m, length), dt)
    rel = KineticPropagator(GridSpec(2, m, length), dt, 3)
    dk = 2 * np.pi / length
    n = np.fft.fftfreq(m, 1 / m).astype(int)
    worst = 0.0
    for i1, n1 in enumerate(n):
        for i2, n2 in enumerate(n):
            for i3, n3 in enumerate(n):
                p_tot = (n1 + n2 + n3) * dk
                if not -m // 2 <= (n1 + n2 + n3) < m // 2:
                    continue
                twist = n1 + n2 + n3
                com = np.exp(-1j * dt * p_tot**2 / 3)
                relative = rel.phase(twist).phase[i2, i3]
                worst = max(worst, abs(full[i1, i2, i3] - com * relative))
    assert worst < 1e-12


@pytest.mark.parametrize("dt", [0.0, 0.05])
def test_scripted_sequences(dt):
    reports = oracle.oracle_check(n_events=10, dt=dt)
    assert [(r.n_particles, r.m) for r in reports] == [(2, 64), (3, 16)]
    for r in reports:
        assert len(r.max_density_error) == 10
        assert r.worst < 1e-9


def test_oracle_size_cap():
    with pytest.raises(ValueError):
        oracle.full_init_uniform(512, 50.0, 3)
