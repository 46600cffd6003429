"""Quantum-jump trajectories: sample a detection, project, renormalize, evolve."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import observables as obs
from .evolution import KineticPropagator, free_evolve
from .scattering import (
    CouplingConfig,
    FeasibilityError,
    ThetaGrid,
    apply_non_scatter,
    apply_scatter,
    non_scatter_amplitude_field,
    scattering_distribution,
    structure_amplitude,
)
from .state import (
    DensityGrid,
    GridSpec,
    Wavefunction,
    ZeroNormError,
    density,
    exchange_asymmetry,
    init_uniform,
    normalize,
)

logger = logging.getLogger(__name__)

NO_SCATTER = "NS"
SCATTER = "SC"

SERIES_FIELDS = ("step", "time", "n_scatter", "width", "h1", "h2", "ratio", "asymmetry")


@dataclass
class SimConfig:
    n_particles: int = 3
    grid: GridSpec = field(default_factory=lambda: GridSpec(2, 512, 50.0))
    thetas: ThetaGrid = field(default_factory=ThetaGrid)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    dt: float = 0.0
    n_events: int = 100
    seed: int = 0
    # 0 keeps only the initial and final snapshot.
    snapshot_every: int = 0
    observe_every: int = 1
    expansion_time: float = 0.0

    def __post_init__(self):
        if self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        if self.dt < 0:
            raise ValueError("dt must be >= 0")
        if self.observe_every < 0 or self.snapshot_every < 0:
            raise ValueError("schedules must be non-negative")
        if self.expansion_time < 0:
            raise ValueError("expansion_time must be >= 0")
        if self.grid.dim != self.n_particles - 1:
            raise ValueError(f"{self.n_particles} particles need a {self.n_particles - 1}-dimensional grid")
        self.coupling.check(self.n_particles)

    def as_dict(self) -> dict:
        return {
            "n_particles": self.n_particles,
            "grid.m": self.grid.m,
            "grid.l": self.grid.length,
            "theta_bins": self.thetas.n_bins,
            "geometry": self.thetas.geometry,
            "g": self.coupling.g,
            "dt": self.dt,
            "n_events": self.n_events,
            "seed": self.seed,
            "snapshot_every": self.snapshot_every,
            "observe_every": self.observe_every,
            "expansion_time": self.expansion_time,
        }


@dataclass
class EventRecord:
    step: int
    time: float
    outcome: str
    theta: float
    q: float
    p_scatter_total: float
    # Norm of the projected state before renormalization.
    norm_after: float


@dataclass
class TrajectoryRecord:
    config: SimConfig
    events: list[EventRecord] = field(default_factory=list)
    series: dict[str, list] = field(default_factory=lambda: {k: [] for k in SERIES_FIELDS})
    snapshots: list[DensityGrid] = field(default_factory=list)
    final: Wavefunction | None = None
    expanded: DensityGrid | None = None
    aborted: str | None = None

    @property
    def n_scatter(self) -> int:
        return sum(e.outcome == SCATTER for e in self.events)

    def series_array(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name], dtype=float)


class TrajectoryCaches:
    """Per-configuration fields shared by every step and every trajectory."""

    def __init__(self, cfg: SimConfig):
        self.grid = cfg.grid
        self.n_particles = cfg.n_particles
        self.amplitude = non_scatter_amplitude_field(cfg.grid, cfg.thetas, cfg.coupling, cfg.n_particles)
        self.angles = cfg.thetas.angles
        self.q = cfg.thetas.applied_q(cfg.grid)
        self.propagator = KineticPropagator(cfg.grid, cfg.dt, cfg.n_particles) if cfg.dt > 0 else None
        self._multipliers: dict[int, np.ndarray] = {}

    def multiplier(self, q: float) -> np.ndarray:
        n = self.grid.lattice_index(q)
        if n not in self._multipliers:
            self._multipliers[n] = structure_amplitude(self.grid, q, self.n_particles)
        return self._multipliers[n]


def sample_event(probs: np.ndarray, rng: np.random.Generator) -> int | None:
    """Scatter bin index with probability probs[b], or None (no scatter).

    Consumes exactly one uniform draw.
    """
    u = rng.random()
    cdf = np.cumsum(probs)
    if cdf.size == 0 or u >= cdf[-1]:
        return None
    return int(np.searchsorted(cdf, u, side="right"))


def _project(psi: Wavefunction, outcome: int | None, caches: TrajectoryCaches) -> Wavefunction:
    if outcome is None:
        return apply_non_scatter(psi, caches.amplitude)
    q = caches.q[outcome]
    if q == 0:
        return psi.copy()
    amp = caches.multiplier(q) * psi.amplitudes
    try:
        return normalize(psi.with_amplitudes(amp, twist=psi.twist + q))
    except ZeroNormError as exc:
        raise ZeroNormError(f"scatter projection with q={q} annihilated the state") from exc


def step(
    psi: Wavefunction,
    cfg: SimConfig,
    caches: TrajectoryCaches,
    rng: np.random.Generator,
    index: int = 0,
) -> tuple[Wavefunction, EventRecord]:
    """One detection event followed by free evolution for cfg.dt."""
    probs = scattering_distribution(psi, cfg.thetas, cfg.coupling)
    p_total = float(probs.sum())
    outcome = sample_event(probs, rng)
    psi = _project(psi, outcome, caches)
    if outcome is None:
        record = EventRecord(index, index * cfg.dt, NO_SCATTER, 0.0, 0.0, p_total, math.sqrt(max(0.0, 1 - p_total)))
    else:
        weight = cfg.coupling.prefactor * cfg.thetas.dtheta
        record = EventRecord(
            index,
            index * cfg.dt,
            SCATTER,
            float(caches.angles[outcome]),
            float(caches.q[outcome]),
            p_total,
            math.sqrt(probs[outcome] / weight),
        )
    if caches.propagator is not None:
        psi = free_evolve(psi, caches.propagator.phase(cfg.grid.lattice_index(psi.twist)))
    else:
        psi.time = (index + 1) * cfg.dt
    return psi, record


def scripted_step(psi: Wavefunction, q: float | None, amplitude: np.ndarray, propagator: KineticPropagator | None):
    """Apply a fixed outcome (None = no scatter), then evolve. No sampling."""
    psi = apply_non_scatter(psi, amplitude) if q is None else apply_scatter(psi, q)
    if propagator is not None:
        psi = free_evolve(psi, propagator.phase(psi.grid.lattice_index(psi.twist)))
    return psi


def _observe(record: TrajectoryRecord, psi: Wavefunction, step_index: int, n_scatter: int) -> None:
    d = density(psi)
    snap = obs.measure(d)
    asym = exchange_asymmetry(psi) if psi.grid.dim == 2 else 0.0
    row = (step_index, psi.time, n_scatter, snap.width, snap.h1, snap.h2, snap.ratio, asym)
    for key, value in zip(SERIES_FIELDS, row):
        record.series[key].append(value)


def run_trajectory(cfg: SimConfig, caches: TrajectoryCaches | None = None, observe: bool = True) -> TrajectoryRecord:
    """Run cfg.n_events detection events from the uniform state.

    Observables are sampled at step 0, after every ``observe_every``-th
    event and after the last one (``observe_every=0``: first and last only);
    snapshots likewise with ``snapshot_every``. If
    ``expansion_time`` is set, the final state is freely expanded with
    scattering off and its density stored in ``expanded``.
    """
    caches = caches or TrajectoryCaches(cfg)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    record = TrajectoryRecord(cfg)
    psi = init_uniform(cfg.grid, cfg.n_particles)
    n_scatter = 0
    if observe:
        _observe(record, psi, 0, 0)
    record.snapshots.append(density(psi))
    for i in range(cfg.n_events):
        try:
            psi, event = step(psi, cfg, caches, rng, i)
        except (ZeroNormError, FeasibilityError) as exc:
            record.aborted = f"step {i}: {exc}"
            logger.warning("trajectory seed=%d aborted: %s", cfg.seed, record.aborted)
            break
        record.events.append(event)
        n_scatter += event.outcome == SCATTER
        done = i + 1
        last = done == cfg.n_events
        if observe and ((cfg.observe_every and done % cfg.observe_every == 0) or last):
            _observe(record, psi, done, n_scatter)
        if (cfg.snapshot_every and done % cfg.snapshot_every == 0) or last:
            record.snapshots.append(density(psi))
    record.final = psi
    if record.aborted is None and cfg.expansion_time > 0:
        record.expanded = density(expand(psi, cfg.expansion_time))
    return record


def expand(psi: Wavefunction, duration: float) -> Wavefunction:
    """Free expansion with scattering switched off."""
    prop = KineticPropagator(psi.grid, duration, psi.n_particles)
    out = free_evolve(psi, prop.phase(psi.grid.lattice_index(psi.twist)))
    grew = edge_density(out) - edge_density(psi)
    if grew > 0.1 / psi.grid.length:
        logger.warning("marginal density at separation L/2 grew by %.3g during expansion; wrap-around may contaminate", grew)
    return out


def edge_density(psi: Wavefunction) -> float:
    """Largest marginal density at the seam x_j = L/2 (maximal separation) along any axis."""
    rho = density(psi).values
    grid = psi.grid
    worst = 0.0
    for axis in range(grid.dim):
        others = tuple(a for a in range(grid.dim) if a != axis)
        marg = rho.sum(axis=others) * grid.dx ** len(others) if others else rho
        worst = max(worst, float(marg[grid.m // 2]))
    return worst


@dataclass
class EnsembleSummary:
    """Per-sample-point statistics across trajectories, merged in seed order."""

    steps: np.ndarray
    width_quartiles: np.ndarray  # (3, n_samples): 25th, 50th, 75th percentile
    ratio_quartiles: np.ndarray
    n_aborted: int
    records: list[TrajectoryRecord]


def _run_seed(args):
    cfg, keep_state = args
    rec = run_trajectory(cfg)
    if not keep_state:
        rec.final = None
    return rec


def run_ensemble(
    cfg: SimConfig, n_traj: int, base_seed: int | None = None, n_jobs: int = 1, keep_state: bool = False
) -> EnsembleSummary:
    """Independent trajectories with seeds base_seed + i."""
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    base = cfg.seed if base_seed is None else base_seed
    caches = TrajectoryCaches(cfg)
    cfgs = [_with_seed(cfg, base + i) for i in range(n_traj)]
    if n_jobs == 1:
        records = [run_trajectory(c, caches) for c in cfgs]
        if not keep_state:
            for r in records:
                r.final = None
    else:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_run_seed, [(c, keep_state) for c in cfgs]))
    return summarize(records)


def _with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=seed)


def summarize(records: list[TrajectoryRecord]) -> EnsembleSummary:
    good = [r for r in records if r.aborted is None]
    n_aborted = len(records) - len(good)
    if not good:
        empty = np.empty((3, 0))
        return EnsembleSummary(np.empty(0), empty, empty, n_aborted, records)
    length = min(len(r.series["step"]) for r in good)
    steps = np.asarray(good[0].series["step"][:length])
    widths = np.array([r.series_array("width")[:length] for r in good])
    ratios = np.array([r.series_array("ratio")[:length] for r in good])
    q = [25, 50, 75]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        wq = np.nanpercentile(widths, q, axis=0)
        rq = np.nanpercentile(ratios, q, axis=0)
    return EnsembleSummary(steps, wq, rq, n_aborted, records)
