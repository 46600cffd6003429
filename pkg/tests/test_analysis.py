import numpy as np
import pytest

from qjloc import analysis as an
from qjloc.scattering import CouplingConfig, ThetaGrid
from qjloc.state import GridSpec
from qjloc.trajectory import SimConfig, TrajectoryRecord, run_ensemble


def fake_record(widths, counts, ratios=None):
    rec = TrajectoryRecord(SimConfig(grid=GridSpec(2, 16, 10.0)))
    rec.series["step"] = list(range(len(widths)))
    rec.series["width"] = list(widths)
    rec.series["n_scatter"] = list(counts)
    rec.series["ratio"] = list(ratios if ratios is not None else [1.0] * len(widths))
    return rec


def test_widths_by_scatter_count_takes_last_before_next_scatter():
    rec = fake_record([9, 5, 4, 3, 2], [0, 1, 1, 2, 3])
    assert an.widths_by_scatter_count([rec]) == {1: [4.0], 2: [3.0], 3: [2.0]}
    short = fake_record([9, 5], [0, 1])
    assert an.widths_by_scatter_count([rec, short]) == {1: [4.0, 5.0]}


def test_fit_recovers_power_law():
    n = np.arange(1, 60)
    table = {int(k): [3.0 * k**-0.5] for k in n}
    fit = an.fit_width_scaling(table, floor=0.5)
    assert fit.exponent == pytest.approx(-0.5, abs=1e-12)
    assert np.all(fit.median_width[fit.used] > 0.5)
    assert not fit.used[-1]


def test_fit_too_few_points():
    assert np.isnan(an.fit_width_scaling({1: [0.1], 2: [0.1]}, 1.0).exponent)


def test_plateau_comparison():
    steps = np.arange(100)
    frozen = [fake_record(1.0 / np.sqrt(steps + 1), steps)]
    free = [fake_record(np.maximum(1.0 / np.sqrt(steps + 1), 0.3), steps)]
    res = an.compare_plateau(free, frozen)
    assert res.excess > 1.0
    assert res.slope == pytest.approx(0.0, abs=1e-12)


def test_localization_helpers_on_real_run():
    cfg = SimConfig(grid=GridSpec(2, 128, 30.0), thetas=ThetaGrid(64), coupling=CouplingConfig(0.3), dt=0.01, n_events=60, expansion_time=0.2)
    records = run_ensemble(cfg, 2).records
    for r in records:
        assert isinstance(an.is_localized(r), bool)
        f = an.fringe_summary(r)
        assert 0 <= f.visibility <= 1
        assert f.n_classes >= 1
    assert an.final_ratios(records).shape == (2,)
