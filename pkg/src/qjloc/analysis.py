"""Ensemble statistics behind the scenario outputs: width scaling, plateau, peak ratios, fringes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import observables as obs
from .trajectory import TrajectoryRecord

# Localized-peak threshold (units 1/k_i) used for the Fig. 2 regime check.
LOCALIZED_WIDTH = 2.0


def widths_by_scatter_count(records: list[TrajectoryRecord]) -> dict[int, list[float]]:
    """Width just before the next scatter event, keyed by scatter count n >= 1.

    Needs per-event observation (observe_every=1). Counts not reached by
    every trajectory are dropped so each entry has one value per trajectory.
    """
    good = [r for r in records if r.aborted is None]
    if not good:
        return {}
    reach = min(int(r.series_array("n_scatter")[-1]) for r in good)
    table: dict[int, list[float]] = {n: [] for n in range(1, reach + 1)}
    for r in good:
        counts = r.series_array("n_scatter")
        widths = r.series_array("width")
        for n in table:
            table[n].append(float(widths[np.nonzero(counts == n)[0][-1]]))
    return table


@dataclass
class ScalingFit:
    exponent: float
    stderr: float
    n: np.ndarray
    median_width: np.ndarray
    used: np.ndarray


def fit_width_scaling(table: dict[int, list[float]], floor: float) -> ScalingFit:
    """Least-squares slope of log(median width) against log(scatter count).

    Only counts whose median width exceeds ``floor`` (the resolution limit)
    enter the fit.
    """
    n = np.array(sorted(table), dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        med = np.array([np.nanmedian(table[int(k)]) for k in n])
    used = np.isfinite(med) & (med > floor)
    if used.sum() < 3:
        return ScalingFit(float("nan"), float("nan"), n, med, used)
    res = stats.linregress(np.log(n[used]), np.log(med[used]))
    return ScalingFit(float(res.slope), float(res.stderr), n, med, used)


def median_series(records: list[TrajectoryRecord], name: str) -> tuple[np.ndarray, np.ndarray]:
    """Sample steps and the across-trajectory median of one observable."""
    good = [r for r in records if r.aborted is None]
    length = min(len(r.series["step"]) for r in good)
    steps = good[0].series_array("step")[:length]
    values = np.array([r.series_array(name)[:length] for r in good])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return steps, np.nanmedian(values, axis=0)


@dataclass
class PlateauComparison:
    excess: float  # median width (dt > 0) / median width (dt = 0) - 1, over the tail
    slope: float
    slope_stderr: float
    slope_pvalue_negative: float  # one-sided p-value for slope < 0


def compare_plateau(free: list[TrajectoryRecord], frozen: list[TrajectoryRecord], tail: float = 0.2) -> PlateauComparison:
    """Width excess with free evolution over the final ``tail`` of events, plus the tail trend.

    The trend is a straight-line fit of the per-event median width (dt > 0)
    over the tail window.
    """
    steps, w_free = median_series(free, "width")
    _, w_frozen = median_series(frozen, "width")
    cut = steps >= steps[-1] * (1 - tail)
    excess = float(np.nanmedian(w_free[cut]) / np.nanmedian(w_frozen[cut]) - 1)
    res = stats.linregress(steps[cut], w_free[cut])
    t = res.slope / res.stderr if res.stderr > 0 else np.inf * np.sign(res.slope)
    p_neg = float(stats.t.cdf(t, df=max(1, cut.sum() - 2)))
    return PlateauComparison(excess, float(res.slope), float(res.stderr), p_neg)


def final_ratios(records: list[TrajectoryRecord]) -> np.ndarray:
    return np.array([r.series_array("ratio")[-1] for r in records if r.aborted is None])


def final_localized_classes(record: TrajectoryRecord, threshold: float = LOCALIZED_WIDTH):
    """Widths of the top peak of every symmetry class in the final density."""
    d = record.snapshots[-1]
    classes = obs.cluster_by_symmetry(obs.find_peaks(d), d.grid)
    return [obs.peak_width(d, c[0]) for c in classes]


def is_localized(record: TrajectoryRecord, threshold: float = LOCALIZED_WIDTH) -> bool:
    widths = final_localized_classes(record, threshold)
    return any(np.isfinite(w) and w < threshold for w in widths)


@dataclass
class FringeResult:
    visibility: float
    maximum: float
    n_classes: int


def significant_classes(d, min_ratio: float = obs.ALIVE_RATIO) -> list[list[obs.Peak]]:
    """Symmetry classes whose highest peak reaches ``min_ratio`` of the overall maximum."""
    classes = obs.cluster_by_symmetry(obs.find_peaks(d), d.grid)
    if not classes:
        return []
    top = classes[0][0].height
    return [c for c in classes if c[0].height >= min_ratio * top]


def fringe_summary(record: TrajectoryRecord) -> FringeResult:
    """Fringe visibility and slice-maximum location of the expanded density."""
    if record.expanded is None:
        raise ValueError("trajectory has no expansion phase")
    d = record.expanded
    n_classes = len(significant_classes(record.snapshots[-1]))
    return FringeResult(obs.fringe_visibility(d), obs.fringe_maximum(d), n_classes)
