import math
from dataclasses import replace

import numpy as np
import pytest

from spinnet import scans
from spinnet.engine import SimConfig
from spinnet.fitkit import emergent_model
from spinnet.scans import (
    Checkpoint,
    calibrate_tau_c0,
    capped_core_radius,
    classify_fit,
    concentration_slice,
    job_key,
    landscape,
    landscape_cell,
    laser_scan,
    one_over_e_time,
    optical_decoupling_extrapolation,
    ordered_vs_random,
    regime_preset,
)

SMALL = SimConfig(box_cells=10, c_el_ppm=500.0, r_c=5.0)
T = np.logspace(-3, np.log10(600), 200)


def test_presets():
    # [PAPER] sequence labels and eta list
    one, two, three = (regime_preset(x) for x in ("I", "II", "III"))
    assert one.spec.sequence.detuning == 0 and one.spec.sequence.flip_angle == 90 and one.spec.eta == 1.5e-3
    assert two.spec.nominal_detuning == 2250.0 and two.spec.eta == 2.0e-3 and two.fit_fix == "R_d"
    assert three.spec.sequence.detuning == 5000.0 and three.spec.sequence.flip_angle == 5 and three.spec.eta == 3.4e-5
    assert three.fit_fix == "R_p" and one.fit_fix is None
    assert abs(two.kappa) < 1e-9 and one.kappa == pytest.approx(-0.5, abs=1e-3)
    with pytest.raises(ValueError):
        regime_preset("X")


def test_calibration_reproduces_default():
    assert calibrate_tau_c0() == pytest.approx(SimConfig().tau_c0, rel=1e-3)


def test_core_cap():
    assert capped_core_radius(16.0, 30e-6) == 16.0
    assert capped_core_radius(16.0, 3000e-6) < 4.0
    assert capped_core_radius(16.0, 0.0) == 16.0


def test_one_over_e_time():
    t = np.logspace(-2, 2, 400)
    assert one_over_e_time(t, np.exp(-t / 3.0)) == pytest.approx(3.0, rel=1e-3)
    assert one_over_e_time(t, np.ones_like(t)) == math.inf


def test_classify_fit_tags():
    assert classify_fit(T, emergent_model(T, 0.5, 0.0))[3] == "diffusion-limited"
    assert classify_fit(T, np.exp(-0.01 * T))[3] == "diffusion-dominated"
    assert classify_fit(T, emergent_model(T, 0.05, 0.002))[3] == "intermediate"
    assert classify_fit(T, np.ones_like(T))[3] == "static"


def test_checkpoint_resume(tmp_path, monkeypatch):
    calls = []
    real = scans._landscape_cell

    def counting(*a, **k):
        calls.append(1)
        return real(*a, **k)

    monkeypatch.setattr(scans, "_landscape_cell", counting)
    a = landscape_cell(0.011, 300.0, 3, seed=2, box_cells=8, checkpoint=tmp_path)
    b = landscape_cell(0.011, 300.0, 3, seed=2, box_cells=8, checkpoint=tmp_path)
    assert len(calls) == 1
    assert a.R_p == b.R_p and a.tag == b.tag
    assert len(list(tmp_path.glob("*.json"))) == 1


def test_checkpoint_noop_and_keys(tmp_path):
    ck = Checkpoint(None)
    ck.put("k", {"x": 1})
    assert ck.get("k") is None
    assert job_key({"a": np.arange(3)}) == job_key({"a": [0, 1, 2]})
    assert job_key({"a": 1}) != job_key({"a": 2})


def test_landscape_shape_and_ranges():
    grid = landscape([0.011, 0.05], [300.0], 2, box_cells=8)
    assert len(grid) == 2 and len(grid[0]) == 1
    for cell in (c for row in grid for c in row):
        assert cell.tag in ("intermediate", "diffusion-limited", "diffusion-dominated", "static", "invalid")
        if cell.R_p > 0 and cell.R_d > 0:
            assert cell.ratio_log10 == pytest.approx(math.log10(cell.R_p / cell.R_d))
        else:
            assert math.isnan(cell.ratio_log10)
    with pytest.raises(ValueError):
        landscape([0.5], [30.0], 1)
    with pytest.raises(ValueError):
        landscape([0.011], [1.0], 1)


def test_invalid_cell_without_nuclei():
    cell = landscape_cell(0.002, 30.0, 2, box_cells=2)
    assert cell.tag == "invalid"


def test_slice_uses_fixed_electron_density():
    cells = concentration_slice([0.011, 0.05], 2, c_el_ppm=300.0, box_cells=8)
    assert [c.c_el_ppm for c in cells] == [300.0, 300.0]


def test_laser_scan_small():
    res = laser_scan("III", [0.0, 3.0, 7.5], 4, seed=1, base=SMALL, n_batches=2)
    assert np.all(res.R_p == 0.0)
    assert np.all(np.diff(res.inv_tau_c) > 0)
    assert res.rows().shape == (3, 7)
    with pytest.raises(ValueError):
        laser_scan("I", [1.0, 0.0], 2, base=SMALL)


def test_ordered_vs_random_trivial_limit():
    pc = ordered_vs_random(2, seed=0, base=replace(SMALL, with_R=False), times=T, box_cells=10)
    assert np.all(pc.ordered == 1.0) and np.array_equal(pc.ordered, pc.random)


def test_ordered_vs_random_pairs_share_seeds():
    pc = ordered_vs_random(2, seed=0, base=SMALL, times=T, box_cells=10)
    assert pc.ordered.shape == pc.random.shape == (2, len(T))
    to, tr = pc.t_1e()
    assert len(to) == 2 and 0.0 <= pc.random_slower_fraction() <= 1.0


def test_decoupling_grid_checks():
    with pytest.raises(ValueError):
        optical_decoupling_extrapolation([1e4, 2e4], 2, base=SMALL)
    with pytest.raises(ValueError):
        optical_decoupling_extrapolation([2e4, 1e4], 2, base=SMALL)


def test_decoupling_fast_bath_limit():
    inv = np.logspace(3, 7, 5)
    res = optical_decoupling_extrapolation(inv, 3, base=SMALL, times=T)
    # the Lorentzian flattens to zero height, so the rate falls past the peak
    assert res.interior_max and res.decreasing_after_peak and res.verdict
    assert res.R_p[-1] < 0.2 * res.R_p.max()
