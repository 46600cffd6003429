import numpy as np
import pytest
from dataclasses import replace
from scipy import optimize, stats

from qjloc.scattering import CouplingConfig, ThetaGrid
from qjloc.state import GridSpec, exchange_asymmetry, init_uniform, momentum_spread, norm
from qjloc.trajectory import (
    NO_SCATTER,
    SCATTER,
    SimConfig,
    TrajectoryCaches,
    run_ensemble,
    run_trajectory,
    sample_event,
    scripted_step,
    step,
)

SMALL = GridSpec(2, 64, 20.0)


def test_sample_event_edge_cases():
    rng = np.random.default_rng(0)
    assert all(sample_event(np.zeros(8), rng) is None for _ in range(100))
    p = np.zeros(8)
    p[3] = 1.0
    assert all(sample_event(p, rng) == 3 for _ in range(100))


def test_sample_event_uses_one_draw():
    a = np.random.Generator(np.random.PCG64(9))
    b = np.random.Generator(np.random.PCG64(9))
    sample_event(np.full(4, 0.1), a)
    b.random()
    assert a.random() == b.random()


def test_sample_event_frequencies():
    rng = np.random.Generator(np.random.PCG64(42))
    p = np.array([0.05, 0.1, 0.02, 0.2, 0.13])
    n = 100_000
    counts = np.zeros(len(p) + 1)
    for _ in range(n):
        b = sample_event(p, rng)
        counts[-1 if b is None else b] += 1
    expected = n * np.append(p, 1 - p.sum())
    assert np.all(np.abs(counts - expected) < 4 * np.sqrt(expected * (1 - expected / n)))
    assert stats.chisquare(counts, expected).pvalue > 1e-4


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_events=0)
    with pytest.raises(ValueError):
        SimConfig(dt=-1)
    with pytest.raises(ValueError):
        SimConfig(n_particles=2)
    with pytest.raises(ValueError):
        SimConfig(coupling=CouplingConfig(1.0))


def test_zero_coupling_never_scatters():
    cfg = SimConfig(grid=SMALL, thetas=ThetaGrid(32), coupling=CouplingConfig(0.0), dt=0.01, n_events=20)
    rec = run_trajectory(cfg)
    assert all(e.outcome == NO_SCATTER and e.theta == 0.0 for e in rec.events)
    assert np.allclose(rec.final.amplitudes, init_uniform(SMALL, 3).amplitudes, atol=1e-14)
    assert np.isnan(rec.series_array("width")[-1])


def test_forward_scatter_is_identity():
    psi = init_uniform(SMALL, 3)
    psi.amplitudes = psi.amplitudes * (1 + 0.1 * np.cos(np.arange(64) * 0.3))[:, None]
    out = scripted_step(psi, 0.0, np.ones(SMALL.shape), None)
    assert np.array_equal(out.amplitudes, psi.amplitudes)


def test_norm_and_bookkeeping():
    cfg = SimConfig(grid=SMALL, thetas=ThetaGrid(64), coupling=CouplingConfig(0.3), dt=0.01, n_events=60)
    caches = TrajectoryCaches(cfg)
    rng = np.random.Generator(np.random.PCG64(3))
    psi = init_uniform(SMALL, 3)
    for i in range(cfg.n_events):
        psi, event = step(psi, cfg, caches, rng, i)
        assert abs(norm(psi) - 1) < 1e-12
        assert event.step == i
        if event.outcome == SCATTER:
            assert event.q == pytest.approx(caches.q[np.flatnonzero(caches.angles == event.theta)[0]])
    rec = run_trajectory(cfg)
    assert len(rec.events) == cfg.n_events
    assert len(rec.series["step"]) == cfg.n_events + 1


def test_bit_reproducible():
    cfg = SimConfig(grid=SMALL, thetas=ThetaGrid(64), coupling=CouplingConfig(0.3), dt=0.01, n_events=40, seed=11)
    a, b = run_trajectory(cfg), run_trajectory(cfg)
    assert a.events == b.events
    assert np.array_equal(a.final.amplitudes, b.final.amplitudes)
    c = run_trajectory(replace(cfg, seed=12))
    assert [e.outcome for e in c.events] != [e.outcome for e in a.events]


def test_exchange_symmetry_survives_trajectory():
    cfg = SimConfig(grid=GridSpec(2, 128, 30.0), coupling=CouplingConfig(0.3), dt=0.005, n_events=150)
    rec = run_trajectory(cfg)
    assert rec.n_scatter > 10
    assert max(rec.series["asymmetry"]) < 1e-10
    assert exchange_asymmetry(rec.final) < 1e-10


def test_width_trend_decreases_without_free_evolution():
    cfg = SimConfig(grid=GridSpec(2, 256, 50.0), coupling=CouplingConfig(0.3), n_events=150, seed=2)
    w = run_trajectory(cfg).series_array("width")
    w = w[np.isfinite(w)]
    fit = optimize.isotonic_regression(w, increasing=False).x
    assert np.sqrt(np.mean((w - fit) ** 2)) < 0.1 * w[0]
    assert w[-1] < 0.5 * w[0]


def test_momentum_spread_grows_as_sqrt_scatter_count():
    cfg = SimConfig(grid=GridSpec(2, 512, 50.0), coupling=CouplingConfig(0.3), n_events=150, observe_every=0)
    caches = TrajectoryCaches(cfg)
    counts, spreads = [], []
    for seed in range(4):
        rng = np.random.Generator(np.random.PCG64(seed))
        psi = init_uniform(cfg.grid, 3)
        n = 0
        for i in range(cfg.n_events):
            psi, event = step(psi, cfg, caches, rng, i)
            if event.outcome == SCATTER:
                n += 1
                counts.append(n)
                spreads.append(momentum_spread(psi))
    counts, spreads = np.array(counts), np.array(spreads)
    use = (counts >= 2) & (counts <= 32)
    slope = stats.linregress(np.log(counts[use]), np.log(spreads[use])).slope
    assert slope == pytest.approx(0.5, abs=0.1)


def test_ensemble_reduces_and_is_deterministic():
    cfg = SimConfig(grid=SMALL, thetas=ThetaGrid(64), coupling=CouplingConfig(0.3), dt=0.01, n_events=30, seed=5)
    one = run_ensemble(cfg, 1)
    single = run_trajectory(cfg)
    assert one.records[0].events == single.events
    a = run_ensemble(cfg, 3)
    b = run_ensemble(cfg, 3)
    assert [r.events for r in a.records] == [r.events for r in b.records]
    assert [r.config.seed for r in a.records] == [5, 6, 7]
    assert a.width_quartiles.shape == (3, cfg.n_events + 1)
    with pytest.raises(ValueError):
        run_ensemble(cfg, 0)


def test_parallel_ensemble_matches_serial():
    cfg = SimConfig(grid=SMALL, thetas=ThetaGrid(64), coupling=CouplingConfig(0.3), dt=0.01, n_events=20)
    serial = run_ensemble(cfg, 2)
    parallel = run_ensemble(cfg, 2, n_jobs=2)
    assert [r.events for r in serial.records] == [r.events for r in parallel.records]
    assert np.array_equal(serial.width_quartiles, parallel.width_quartiles, equal_nan=True)


def test_disjoint_seed_ranges_uncorrelated():
    cfg = SimConfig(grid=SMALL, thetas=ThetaGrid(64), coupling=CouplingConfig(0.3), n_events=400, observe_every=0)
    a = run_ensemble(cfg, 4, base_seed=0).records
    b = run_ensemble(cfg, 4, base_seed=100).records
    xa = np.concatenate([[e.outcome == SCATTER for e in r.events] for r in a]).astype(float)
    xb = np.concatenate([[e.outcome == SCATTER for e in r.events] for r in b]).astype(float)
    assert abs(np.corrcoef(xa, xb)[0, 1]) < 4 / np.sqrt(len(xa))


def test_expansion_phase():
    cfg = SimConfig(grid=SMALL, thetas=ThetaGrid(64), coupling=CouplingConfig(0.3), dt=0.01, n_events=30, expansion_time=0.2)
    rec = run_trajectory(cfg)
    assert rec.expanded is not None
    assert rec.expanded.time == pytest.approx(rec.final.time + 0.2)
    assert rec.expanded.total() == pytest.approx(1.0, abs=1e-10)
