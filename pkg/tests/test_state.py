import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qjloc.state import (
    MOMENTUM,
    GridSpec,
    Wavefunction,
    ZeroNormError,
    apply_symmetry_map,
    density,
    exchange_asymmetry,
    gaussian_state,
    init_uniform,
    norm,
    normalize,
    symmetry_images,
    to_momentum,
    to_position,
)

from conftest import random_state


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(2, 24, 50.0)
    with pytest.raises(ValueError):
        GridSpec(2, 8, 50.0)
    with pytest.raises(ValueError):
        GridSpec(2, 16, -1.0)
    g = GridSpec(2, 512, 50.0)
    assert g.dx * g.m == pytest.approx(50.0, abs=0)
    assert g.dk == pytest.approx(2 * np.pi / 50)
    n = g.momentum_indices()
    assert n.min() == -256 and n.max() == 255


def test_lattice_index():
    g = GridSpec(1, 16, 50.0)
    assert g.lattice_index(3 * g.dk) == 3
    with pytest.raises(ValueError):
        g.lattice_index(0.5 * g.dk)


def test_init_uniform_values():
    psi = init_uniform(GridSpec(2, 16, 50.0), 3)
    assert np.allclose(psi.amplitudes, 0.02, rtol=0, atol=1e-15)
    assert norm(psi) == pytest.approx(1.0, abs=1e-12)
    psi1 = init_uniform(GridSpec(1, 16, 50.0), 2)
    assert np.allclose(psi1.amplitudes, 1 / np.sqrt(50.0))
    assert density(psi).total() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(density(psi).values, 1 / 2500)


def test_particle_dimension_mismatch():
    with pytest.raises(ValueError):
        init_uniform(GridSpec(2, 16, 10.0), 2)


def test_constant_transforms_to_zero_momentum():
    mom = to_momentum(init_uniform(GridSpec(2, 32, 10.0), 3))
    mag = np.abs(mom.amplitudes)
    assert mag[0, 0] > 0
    mag[0, 0] = 0
    assert mag.max() < 1e-12


def test_plane_wave_is_lattice_delta():
    grid = GridSpec(1, 64, 20.0)
    x = grid.positions()
    psi = normalize(Wavefunction(grid, np.exp(1j * 5 * grid.dk * x), 2))
    mom = np.abs(to_momentum(psi).amplitudes)
    assert int(np.argmax(mom)) == 5
    mom[5] = 0
    assert mom.max() < 1e-12


def test_round_trip_and_unitarity(rng):
    grid = GridSpec(2, 32, 12.0)
    psi = random_state(grid, 3, rng)
    mom = to_momentum(psi)
    assert mom.representation == MOMENTUM
    assert abs(norm(mom) - 1) < 1e-12
    back = to_position(mom)
    rel = np.max(np.abs(back.amplitudes - psi.amplitudes)) / np.max(np.abs(psi.amplitudes))
    assert rel < 1e-12
    with pytest.raises(ValueError):
        to_position(psi)
    with pytest.raises(ValueError):
        to_momentum(mom)


def test_normalize_zero():
    grid = GridSpec(1, 16, 5.0)
    with pytest.raises(ZeroNormError):
        normalize(Wavefunction(grid, np.zeros(16, complex), 2))


def test_gaussian_density_peak():
    grid = GridSpec(2, 64, 20.0)
    psi = gaussian_state(grid, 3, (5.0, 12.5), 0.8)
    d = density(psi)
    i = np.unravel_index(np.argmax(d.values), grid.shape)
    assert np.allclose(np.array(i) * grid.dx, (5.0, 12.5), atol=grid.dx)
    assert d.total() == pytest.approx(1.0, abs=1e-10)


def test_symmetry_images_examples():
    assert symmetry_images((0.0, 0.0), 50.0) == [(0.0, 0.0)] * 6
    orbit = symmetry_images((14.0, 35.0), 50.0)
    assert (35.0, 14.0) in orbit
    # (21, 35) shares the interparticle distances {14, 21, 35} but is the
    # mirror configuration, not a relabelling of (14, 35).
    assert all(np.hypot(a - 21, b - 35) > 1e-9 for a, b in orbit)
    assert (21.0, 35.0) in symmetry_images((50 - 14.0, 50 - 35.0), 50.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 50, exclude_max=True), st.floats(0, 50, exclude_max=True))
def test_orbit_closure(x1, x2):
    length = 50.0
    orbit = symmetry_images((x1, x2), length)
    assert len({(round(a, 9), round(b, 9)) for a, b in orbit}) <= 6

    def key(p):
        return tuple(round(v % length, 6) % length for v in p)

    base = {key(p) for p in orbit}
    for p in orbit:
        assert {key(q) for q in symmetry_images(p, length)} == base


def test_symmetry_maps_form_group():
    m = 16
    field = np.random.default_rng(0).random((m, m))
    for k in range(6):
        for j in range(6):
            composed = apply_symmetry_map(apply_symmetry_map(field, k), j)
            assert any(np.array_equal(composed, apply_symmetry_map(field, i)) for i in range(6))


def test_exchange_asymmetry(rng):
    grid = GridSpec(2, 32, 10.0)
    assert exchange_asymmetry(init_uniform(grid, 3)) == 0.0
    assert exchange_asymmetry(random_state(grid, 3, rng, symmetric=True)) < 1e-15
    assert exchange_asymmetry(gaussian_state(grid, 3, (2.0, 6.0), 0.7)) > 1e-3
    with pytest.raises(ValueError):
        exchange_asymmetry(init_uniform(GridSpec(1, 16, 10.0), 2))
