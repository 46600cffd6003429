"""Command line entry point: run scenarios from TOML configs, oracle checks, presets.

Exit codes: 0 ok, 2 config error, 3 feasibility error, 4 runtime abort or I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from . import analysis as an
from . import io
from . import observables as obs
from .oracle import oracle_check
from .scattering import AXIAL, CouplingConfig, FeasibilityError, ThetaGrid
from .state import GridSpec
from .trajectory import SimConfig, TrajectoryRecord, run_ensemble

logger = logging.getLogger("qjloc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FEASIBILITY = 3
EXIT_RUNTIME = 4

SCENARIOS = ("localize", "scaling", "decoherence", "expand", "oracle-check")
KEYS = (
    "scenario",
    "n_particles",
    "grid.m",
    "grid.l",
    "theta_bins",
    "geometry",
    "g",
    "dt",
    "n_events",
    "seed",
    "n_traj",
    "snapshot_every",
    "expansion_time",
    "out_dir",
    "observe_every",
)
INT_KEYS = {"n_particles", "grid.m", "theta_bins", "n_events", "seed", "n_traj", "snapshot_every", "observe_every"}
FLOAT_KEYS = {"grid.l", "g", "dt", "expansion_time"}
OUT_DIR_ENV = "QJLOC_OUT_DIR"
ORACLE_TOLERANCE = 1e-9


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    sim: SimConfig
    n_traj: int = 1
    out_dir: Path = Path("qjloc_out")
    # Raw key/value pairs as read, for the manifest.
    raw: dict | None = None


PRESETS = {
    "localize": (
        "three-particle localization: 100 events over t in [0, 1] (dt inferred as 1/100)",
        """scenario = "localize"
n_particles = 3
grid.m = 512
grid.l = 50.0
theta_bins = 256
geometry = "axial"
dt = 0.01
n_events = 100
seed = 0
n_traj = 20
snapshot_every = 20
out_dir = "out/localize"
""",
    ),
    "expand": (
        "localization as above, then free expansion with scattering off",
        """scenario = "expand"
n_particles = 3
grid.m = 512
grid.l = 50.0
theta_bins = 256
geometry = "axial"
dt = 0.01
n_events = 100
seed = 0
n_traj = 20
snapshot_every = 20
expansion_time = 1.0
out_dir = "out/expand"
""",
    ),
    "scaling": (
        "peak width against scatter count without free evolution",
        """scenario = "scaling"
n_particles = 3
grid.m = 512
grid.l = 50.0
theta_bins = 256
geometry = "axial"
dt = 0.0
n_events = 400
seed = 0
n_traj = 10
out_dir = "out/scaling"
""",
    ),
    "decoherence": (
        "paired runs with and without free evolution: 5000 events, dt = 0.0001",
        """scenario = "decoherence"
n_particles = 3
grid.m = 512
grid.l = 50.0
theta_bins = 256
geometry = "axial"
dt = 0.0001
n_events = 5000
seed = 0
n_traj = 4
observe_every = 50
out_dir = "out/decoherence"
""",
    ),
    "oracle": (
        "relative-coordinate pipeline against the full-coordinate reference",
        """scenario = "oracle-check"
out_dir = "out/oracle"
""",
    ),
}


def _flatten(table: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def _coerce(key: str, value):
    if key in INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if key in FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def scenario_from_dict(raw: dict) -> Scenario:
    """Validate a flat key/value mapping. FeasibilityError passes through unchanged."""
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    if "scenario" not in raw:
        raise ConfigError("missing required key: scenario")
    values = {k: _coerce(k, v) for k, v in raw.items()}
    name = values["scenario"]
    if name not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}; got {name!r}")
    if name == "expand" and values.get("expansion_time", 0.0) <= 0:
        raise ConfigError("scenario 'expand' requires expansion_time > 0")
    if name == "scaling" and values.get("observe_every", 1) != 1:
        raise ConfigError("scenario 'scaling' needs observe_every = 1")
    if name == "decoherence" and values.get("dt", 0.0) <= 0:
        raise ConfigError("scenario 'decoherence' requires dt > 0 (the dt = 0 partner run is added automatically)")
    n = values.get("n_particles", 3)
    if n < 2:
        raise ConfigError("n_particles must be >= 2")
    coupling = CouplingConfig(values["g"]) if "g" in values else CouplingConfig()
    coupling.check(n)
    try:
        sim = SimConfig(
            n_particles=n,
            grid=GridSpec(n - 1, values.get("grid.m", 512), values.get("grid.l", 50.0)),
            thetas=ThetaGrid(values.get("theta_bins", 256), values.get("geometry", AXIAL)),
            coupling=coupling,
            dt=values.get("dt", 0.0),
            n_events=values.get("n_events", 100),
            seed=values.get("seed", 0),
            snapshot_every=values.get("snapshot_every", 0),
            observe_every=values.get("observe_every", 1),
            expansion_time=values.get("expansion_time", 0.0),
        )
    except FeasibilityError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    n_traj = values.get("n_traj", 1)
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")
    out_dir = Path(os.environ.get(OUT_DIR_ENV) or values.get("out_dir", "qjloc_out"))
    return Scenario(name, sim, n_traj, out_dir, dict(raw))


def parse_config(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            table = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scenario_from_dict(_flatten(table))


def header_params(s: Scenario, sim: SimConfig | None = None) -> dict:
    sim = sim or s.sim
    params = {"scenario": s.name, **sim.as_dict(), "n_traj": s.n_traj, "version": __version__}
    if s.name in ("localize", "expand") and abs(sim.dt * sim.n_events - 1.0) < 1e-12:
        params["note"] = "dt taken as 1/n_events so the scattering window spans t in [0, 1]"
    return params


def _write_trajectory(out: Path, rec: TrajectoryRecord, params: dict) -> list[str]:
    seed = rec.config.seed
    params = {**params, "seed": seed}
    io.write_events(out / f"events_seed{seed}.csv", rec.events, params)
    io.write_series(out / f"series_seed{seed}.csv", rec, params)
    files = [f"events_seed{seed}.csv", f"series_seed{seed}.csv"]
    for k, d in enumerate(rec.snapshots):
        name = f"snapshot_seed{seed}_{k:04d}.qjl"
        io.write_snapshot(out / name, d)
        files.append(name)
    if rec.expanded is not None:
        name = f"expanded_seed{seed}.qjl"
        io.write_snapshot(out / name, rec.expanded)
        files.append(name)
    return files


def _aborts(records: list[TrajectoryRecord]) -> dict[str, str]:
    return {str(r.config.seed): r.aborted for r in records if r.aborted is not None}


def _run_ensemble(s: Scenario, sim: SimConfig, out: Path, n_jobs: int, keep_state: bool = False):
    out.mkdir(parents=True, exist_ok=True)
    records = run_ensemble(sim, s.n_traj, n_jobs=n_jobs, keep_state=keep_state).records
    params = header_params(s, sim)
    files = []
    for rec in records:
        files += _write_trajectory(out, rec, params)
    return records, files


def _localize_table(records: list[TrajectoryRecord]) -> dict[str, list]:
    cols = {"seed": [], "n_scatter": [], "width": [], "localized": [], "n_classes": [], "ratio": []}
    for r in records:
        if r.aborted is not None:
            continue
        d = r.snapshots[-1]
        cols["seed"].append(r.config.seed)
        cols["n_scatter"].append(r.n_scatter)
        cols["width"].append(r.series_array("width")[-1] if r.series["width"] else obs.measure(d).width)
        cols["localized"].append(int(an.is_localized(r)))
        cols["n_classes"].append(len(an.significant_classes(d)))
        cols["ratio"].append(r.series_array("ratio")[-1] if r.series["ratio"] else float("nan"))
    return cols


def run_scenario(s: Scenario, n_jobs: int = 1) -> int:
    """Run a validated scenario, write its files and manifest; return the exit status."""
    start = time.time()
    out = s.out_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"scenario": s.name, "config": s.raw, "version": __version__, "n_traj": s.n_traj}
    status = EXIT_OK
    if s.name == "oracle-check":
        reports = oracle_check()
        cols = {"n_particles": [], "m": [], "step": [], "max_density_error": []}
        for rep in reports:
            for k, err in enumerate(rep.max_density_error):
                cols["n_particles"].append(rep.n_particles)
                cols["m"].append(rep.m)
                cols["step"].append(k + 1)
                cols["max_density_error"].append(err)
        io.write_table(out / "oracle.csv", cols, {"scenario": s.name, "tolerance": ORACLE_TOLERANCE})
        worst = max(r.worst for r in reports)
        manifest.update(files=["oracle.csv"], worst_error=worst, passed=worst <= ORACLE_TOLERANCE)
        print(f"oracle-check: worst density error {worst:.3g} (tolerance {ORACLE_TOLERANCE:g})")
        if worst > ORACLE_TOLERANCE:
            status = EXIT_RUNTIME
    else:
        seeds = [s.sim.seed + i for i in range(s.n_traj)]
        manifest["seeds"] = seeds
        if s.name == "decoherence":
            frozen_sim = replace(s.sim, dt=0.0)
            free, files_a = _run_ensemble(s, s.sim, out / "free", n_jobs)
            frozen, files_b = _run_ensemble(s, frozen_sim, out / "frozen", n_jobs)
            files = [f"free/{f}" for f in files_a] + [f"frozen/{f}" for f in files_b]
            records = free + frozen
            cols = {
                "seed": seeds,
                "ratio_free": [r.series_array("ratio")[-1] for r in free],
                "ratio_frozen": [r.series_array("ratio")[-1] for r in frozen],
            }
            io.write_table(out / "ratios.csv", cols, header_params(s))
            files.append("ratios.csv")
            if all(r.aborted is None for r in records):
                plateau = an.compare_plateau(free, frozen)
                manifest["plateau"] = vars(plateau)
            manifest["median_final_ratio"] = {
                "free": float(np.nanmedian(an.final_ratios(free))),
                "frozen": float(np.nanmedian(an.final_ratios(frozen))),
            }
        else:
            records, files = _run_ensemble(s, s.sim, out, n_jobs)
            if s.name == "scaling":
                table = an.widths_by_scatter_count(records)
                fit = an.fit_width_scaling(table, 3 * s.sim.grid.dx)
                cols = {
                    "n_scatter": [int(n) for n in fit.n],
                    "median_width": fit.median_width,
                    "q25": [np.percentile(table[int(n)], 25) for n in fit.n],
                    "q75": [np.percentile(table[int(n)], 75) for n in fit.n],
                    "in_fit": [int(u) for u in fit.used],
                }
                params = {**header_params(s), "exponent": fit.exponent, "exponent_stderr": fit.stderr}
                io.write_table(out / "width_table.csv", cols, params)
                files.append("width_table.csv")
                manifest["fit"] = {"exponent": fit.exponent, "stderr": fit.stderr}
                print(f"scaling: fitted exponent {fit.exponent:.3f} +/- {fit.stderr:.3f}")
            else:
                io.write_table(out / "localization.csv", _localize_table(records), header_params(s))
                files.append("localization.csv")
            if s.name == "expand":
                cols = {"seed": [], "visibility": [], "fringe_max": [], "n_classes": []}
                for r in records:
                    if r.aborted is None:
                        f = an.fringe_summary(r)
                        cols["seed"].append(r.config.seed)
                        cols["visibility"].append(f.visibility)
                        cols["fringe_max"].append(f.maximum)
                        cols["n_classes"].append(f.n_classes)
                io.write_table(out / "fringes.csv", cols, header_params(s))
                files.append("fringes.csv")
        aborts = _aborts(records)
        manifest.update(files=files, aborts=aborts)
        if aborts:
            status = EXIT_RUNTIME
        if s.name in ("localize", "expand") and "note" in header_params(s):
            manifest["note"] = header_params(s)["note"]
    manifest["wall_time_s"] = round(time.time() - start, 3)
    manifest["exit_status"] = status
    io.write_manifest(out / "manifest.json", manifest)
    return status


def _cmd_run(args) -> int:
    try:
        s = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FeasibilityError as exc:
        print(f"feasibility error: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    if args.out_dir:
        s.out_dir = Path(args.out_dir)
    try:
        return run_scenario(s, n_jobs=args.jobs)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _cmd_oracle(args) -> int:
    s = Scenario("oracle-check", SimConfig(), out_dir=Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "out/oracle"))
    s.raw = {"scenario": "oracle-check"}
    try:
        return run_scenario(s)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name, (desc, _) in PRESETS.items():
            print(f"{name:12s} {desc}")
        return EXIT_OK
    if args.name not in PRESETS:
        print(f"unknown preset {args.name!r}; try 'presets list'", file=sys.stderr)
        return EXIT_CONFIG
    print(PRESETS[args.name][1], end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qjloc", description="Scattering-induced localization by quantum jumps.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario from a TOML config")
    run.add_argument("config")
    run.add_argument("--out-dir", help=f"overrides out_dir and ${OUT_DIR_ENV}")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for ensembles")
    run.set_defaults(func=_cmd_run)
    oc = sub.add_parser("oracle-check", help="compare against the full-coordinate reference")
    oc.add_argument("--out-dir")
    oc.set_defaults(func=_cmd_oracle)
    pr = sub.add_parser("presets", help="list or print the built-in configs")
    pr.add_argument("action", choices=("list", "show"))
    pr.add_argument("name", nargs="?")
    pr.set_defaults(func=_cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets" and args.action == "show" and not args.name:
        parser.error("presets show needs a preset name")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
