"""End-to-end acceptance criteria 1-11.

Each test records a one-line verdict (see conftest) and then asserts it.
Run on their own with ``pytest -m acceptance -v``; the full set takes about
40 minutes on one core.
"""

import itertools
import math
import os
from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from spinnet.bath import LorentzianBath, tau_c_of_power
from spinnet.dipolar import build_coupling_table
from spinnet.engine import (
    SimConfig,
    build_R,
    build_W,
    build_realization,
    ensemble_decay,
    propagate,
    realization_generator,
    realization_seed,
    write_csv,
)
from spinnet.fitkit import fit_emergent, gamma_sweep, poisson_stretched_oracle
from spinnet.floquet import PulseSequence, find_kappa_zero, kappa
from spinnet.lattice import frozen_core_radius
from spinnet.scans import landscape_cell, laser_scan, optical_decoupling_extrapolation, ordered_vs_random
from spinnet.spectral import decompose, rp_dep_comparison, slowest_modes_and_decay
from spinnet.transport import finite_size_scan, transport_run

pytestmark = pytest.mark.acceptance

WORKERS = os.cpu_count() or 1
DEFAULT = SimConfig()
POWERS = [0.0, 1.5, 3.0, 4.5, 6.0, 7.5]


def test_c01_emergent_law_gamma(criterion):
    dc = ensemble_decay(DEFAULT, 100, 0, workers=WORKERS)
    table, g = gamma_sweep(dc)
    ok = abs(g - 0.50) <= 0.05 + 1e-12
    criterion(1, ok, f"gamma argmin {g:.2f} (target 0.50 +/- 0.05)")
    assert ok


def test_c02_diffusionless_oracle(criterion):
    times = np.logspace(-4, 6, 200)
    _, e6, _ = poisson_stretched_oracle(1.0, 0.01, 4000, times, power=6.0, seed=0)
    _, e4, _ = poisson_stretched_oracle(1.0, 0.01, 4000, times, power=4.0, seed=0)
    ok = abs(e6 - 0.50) <= 0.03 and abs(e4 - 0.75) <= 0.03
    criterion(2, ok, f"1/r^6 exponent {e6:.3f} (0.50 +/- 0.03), 1/r^4 exponent {e4:.3f} (0.75 +/- 0.03)")
    assert ok


def test_c03_anomalous_transport(criterion):
    low = transport_run(0.011, 25, 100, seed=0, workers=WORKERS)
    high = transport_run(0.20, 10, 100, seed=0, workers=WORKERS)
    ok_a = abs(low.alpha - 0.85) <= 0.05
    ok_h = abs(high.alpha - 1.00) <= 0.05
    ok_d = abs(low.D - 3.86) <= 0.25 * 3.86
    ok = ok_a and ok_h and ok_d
    criterion(3, ok, f"alpha(1.1%) {low.alpha:.3f} [{'ok' if ok_a else 'out'}], "
                     f"alpha(20%) {high.alpha:.3f} [{'ok' if ok_h else 'out'}], "
                     f"D(1.1%) {low.D:.2f} vs 3.86 +/- 25% [{'ok' if ok_d else 'out'}]")
    assert ok


def test_c04_finite_size(criterion):
    sizes = [12, 16, 20, 28]
    rows = finite_size_scan(0.011, sizes, n_runs=5, n_traj=20, seed=0, workers=WORKERS)
    n_range = rows[-1, 0] / rows[0, 0]
    bad = []
    for i, j in itertools.combinations(range(len(rows)), 2):
        for name, v, e in (("alpha", 2, 3), ("D", 4, 5)):
            if abs(rows[i, v] - rows[j, v]) > 2 * math.hypot(rows[i, e], rows[j, e]):
                bad.append(f"{name} {sizes[i]}/{sizes[j]}")
    ok = n_range >= 10 and not bad
    detail = ", ".join(f"{c}: a={r[2]:.3f}+/-{r[3]:.3f} D={r[4]:.2f}+/-{r[5]:.2f}" for c, r in zip(sizes, rows))
    criterion(4, ok, f"N range {n_range:.1f}x; {detail}" + (f"; inconsistent: {bad}" if bad else ""))
    assert ok


def test_c05_slowest_mode_vs_diffusive_rate(criterion):
    parts, ok = [], True
    for ppm in (15.0, 30.0, 60.0):
        cfg = replace(DEFAULT, c_el_ppm=ppm)
        lam0, dc = slowest_modes_and_decay(cfg, 400, 0, workers=WORKERS)
        fr = fit_emergent(dc)
        ratio = lam0.mean() / (2 * fr.R_d) if fr.R_d > 0 else float("inf")
        ok &= 0.85 <= ratio <= 1.15
        parts.append(f"{ppm:g} ppm: <lam0>={lam0.mean():.3g} R_d={fr.R_d:.3g} ratio={ratio:.3g}")
    criterion(5, ok, "; ".join(parts) + " (target [0.85, 1.15])")
    assert ok


def test_c06_rp_independent_of_hopping(criterion):
    rp_full, rp_dep, _ = rp_dep_comparison(DEFAULT, 100, 0, workers=WORKERS)
    ratio = rp_full / rp_dep
    ok = 0.9 <= ratio <= 1.1
    criterion(6, ok, f"R_p full {rp_full:.4g}, W=0 {rp_dep:.4g}, ratio {ratio:.3f} (target [0.9, 1.1])")
    assert ok


def test_c07_cardinal_points(criterion):
    a = landscape_cell(0.004, 3000.0, 100, seed=0, workers=WORKERS)
    b = landscape_cell(0.10, 2.0, 100, seed=0, workers=WORKERS)
    ok_a1 = a.t_1e < 0.5
    ok_a2 = a.rrms_stretched <= 1.10 * a.rrms_two
    ok_b1 = b.P_end > math.exp(-1)
    ok_b2 = b.rrms_mono <= 1.10 * b.rrms_two
    ok = ok_a1 and ok_a2 and ok_b1 and ok_b2
    criterion(7, ok, f"(0.4%, 3000 ppm) t_1e {a.t_1e:.3g} s, rrms stretched/two "
                     f"{a.rrms_stretched:.4f}/{a.rrms_two:.4f}; "
                     f"(10%, 2 ppm) P(600 s) {b.P_end:.3f}, rrms mono/two {b.rrms_mono:.4f}/{b.rrms_two:.4f}")
    assert ok


def test_c08_regime_channel_elimination(criterion):
    cfgs = {r: replace(DEFAULT, regime=r) for r in ("I", "II", "III")}
    real = build_realization(DEFAULT, realization_seed(0, 0))
    table = build_coupling_table(real, DEFAULT.B_axis)
    bath = LorentzianBath(DEFAULT.tau_c_value)
    W = {r: build_W(table, c.floquet().kappa, c.T2_value) for r, c in cfgs.items()}
    R = {r: build_R(table, c.floquet(), bath, c.eta_value) for r, c in cfgs.items()}
    w_ratio = np.abs(W["II"]).max() / np.abs(W["I"]).max()
    r_ratio = np.abs(R["III"]).mean() / np.abs(R["I"]).mean()
    ok = w_ratio <= 1e-3 and r_ratio <= 1e-2
    criterion(8, ok, f"max|W| II/I {w_ratio:.3g} (<= 1e-3), mean|R| III/I {r_ratio:.3g} (<= 1e-2), "
                     f"{real.n_nuclei} nuclei, {real.n_electrons} electrons")
    assert ok


def test_c09_laser_trends(criterion):
    lm = tau_c_of_power(np.linspace(0.0, 10.0, 11))
    powers = POWERS
    two = laser_scan("II", powers, 50, seed=0, workers=WORKERS)
    three = laser_scan("III", powers, 50, seed=0, workers=WORKERS)
    r_two, r_three = two.pearson("R_p"), three.pearson("R_d")
    mono_two = bool(np.all(np.diff(two.R_p) > 0))
    mono_three = bool(np.all(np.diff(three.R_d) > 0))
    dec = optical_decoupling_extrapolation(np.logspace(3, 6, 13), 30, seed=0, workers=WORKERS)
    ok_map = lm.r_squared > 0.99
    ok_two = mono_two and r_two > 0.9
    ok_three = mono_three and r_three > 0.9
    ok = ok_map and ok_two and ok_three and dec.verdict
    criterion(9, ok, f"1/tau_c(Gamma_p) R^2 {lm.r_squared:.5f}; II R_p monotone={mono_two} r={r_two:.3f}; "
                     f"III R_d monotone={mono_three} r={r_three:.3f}; extended grid peak at "
                     f"{dec.argmax:.3g} s^-1 interior={dec.interior_max} decreasing={dec.decreasing_after_peak}")
    assert ok


def test_c10_disorder_protection(criterion):
    pc = ordered_vs_random(50, seed=0, workers=WORKERS)
    frac = pc.random_slower_fraction()
    ok = len(pc.seeds) == 50 and frac >= 0.9
    criterion(10, ok, f"random slower in {frac:.0%} of {len(pc.seeds)} pairs (>= 90%)")
    assert ok


def _property_suite(tmp_path):
    out = {}
    cfg = DEFAULT
    real = build_realization(cfg, realization_seed(0, 0))
    n = real.n_nuclei
    gm = realization_generator(cfg, real)
    times = np.logspace(-2, np.log10(600.0), 40)
    p0 = np.full(n, 1.0 / n)

    # conservation with R = 0
    P = propagate(gm.W, p0, times)
    out["conservation"] = float(np.max(np.abs(P.sum(axis=1) - 1.0))) <= 1e-9

    # spectral reconstruction against an independent matrix exponential
    modes = decompose(gm.M, p0)
    sub = np.array([0.1, 1.0, 10.0])
    direct = np.array([expm(gm.M * t) @ p0 for t in sub]).sum(axis=1)
    out["spectral"] = float(np.max(np.abs(modes.total(sub) - direct))) <= 1e-8

    out["eigen_nonneg"] = float(modes.lambdas.min()) >= -1e-10

    # fit covariance under t -> s t
    dc = ensemble_decay(replace(cfg, box_cells=14), 20, 3, times=np.logspace(-2, np.log10(600.0), 120))
    s = 7.3
    f1 = fit_emergent(dc.times, dc.values)
    f2 = fit_emergent(dc.times / s, dc.values)
    cov = []
    for a, b in ((f1.R_p * s, f2.R_p), (f1.R_d * s, f2.R_d)):
        cov.append(abs(a - b) <= 1e-6 * max(abs(a), abs(b), 1e-300))
    out["fit_covariance"] = all(cov)

    # determinism across worker counts
    small = replace(cfg, box_cells=14)
    files = []
    for w in (1, 2):
        d = ensemble_decay(small, 8, 5, times=times, workers=w)
        path = tmp_path / f"decay_w{w}.csv"
        write_csv(path, ["t", "P", "stderr"], np.column_stack([d.times, d.values, d.stderr]))
        files.append(path.read_bytes())
    out["determinism"] = files[0] == files[1]

    out["core_radius"] = abs(frozen_core_radius(4.5, 9.4, 100.0) - 16.0) <= 0.5
    out["kappa_static"] = abs(kappa(PulseSequence(0.0, 0.0, 1e-4, 0.0)) - 1.0) <= 1e-12
    out["kappa_spin_lock"] = abs(kappa(PulseSequence(90.0, 78e-6, 0.0, 0.0)) + 0.5) <= 1e-3
    base = PulseSequence(90.0, 38e-6, 40e-6, 0.0)
    try:
        root = find_kappa_zero(base, 1500.0, 3500.0)
        out["kappa_zero"] = 1500.0 < root < 3500.0
    except ValueError:
        out["kappa_zero"] = False
    return out


def test_c11_property_suite(criterion, tmp_path):
    res = _property_suite(tmp_path)
    ok = all(res.values())
    failed = [k for k, v in res.items() if not v]
    criterion(11, ok, f"{sum(res.values())}/{len(res)} properties hold" + (f"; failed: {failed}" if failed else ""))
    assert ok
