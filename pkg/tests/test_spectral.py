from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinnet.dipolar import CouplingTable
from spinnet.engine import SimConfig, build_W, ensemble_decay, propagate
from spinnet.lattice import BoxGeometry, SpinRealization
from spinnet.spectral import (
    ModeSet,
    asymptotic_form,
    cosine_similarity,
    decompose,
    eigenvalue_spectrum,
    mode_profile_2d,
    realization_modes,
    rp_dep_comparison,
    slowest_mode_stats,
    slowest_modes_and_decay,
    spectral_gap_ratio,
)

SMALL = SimConfig(box_cells=12, c_el_ppm=300.0, r_c=6.0)


def _M(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, n)) * 40
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0)
    W = build_W(CouplingTable(d=d, h=np.zeros((n, 0))), -0.5, 2.5e-5)
    return W + np.diag(-rng.random(n) * 0.2)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10**6))
def test_spectral_reconstruction(n, seed):
    M = _M(n, seed)
    p0 = np.full(n, 1.0 / n)
    modes = decompose(M, p0)
    t = np.array([0.0, 0.1, 1.0, 10.0, 100.0])
    ref = propagate(M, p0, t).sum(axis=1)
    assert np.allclose(modes.total(t), ref, rtol=1e-8, atol=1e-12)
    assert np.all(np.diff(modes.lambdas) >= 0)
    assert modes.amplitudes.sum() == pytest.approx(1.0, rel=1e-10)


def test_asymptotic_form_converges_to_total():
    modes = decompose(_M(10, 3), np.full(10, 0.1))
    t = np.array([1e3, 1e4])
    val, valid = asymptotic_form(modes, t)
    assert np.all(valid)
    assert np.allclose(val, modes.total(t), rtol=1e-6)
    with pytest.raises(ValueError):
        asymptotic_form(ModeSet(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.eye(2)), [1.0])


def test_asymptotic_form_flags_early_times():
    modes = ModeSet(np.array([0.1, 10.0]), np.array([0.2, 0.8]), np.eye(2))
    _, valid = asymptotic_form(modes, np.array([0.01, 10.0]))
    assert not valid[0] and valid[1]


def test_slowest_mode_stats_excludes_conserved():
    mean, se, used, zero = slowest_mode_stats(SMALL, 6, 1)
    assert used + zero <= 6 and used > 0 and mean > 0 and se >= 0
    mean0, _, used0, zero0 = slowest_mode_stats(replace(SMALL, c_el_ppm=0.0), 3, 1)
    assert used0 == 0 and zero0 == 3 and mean0 == 0.0


def test_single_decomposition_route_matches_ensemble():
    times = np.logspace(-2, 2, 25)
    lam0, dc = slowest_modes_and_decay(SMALL, 5, 2, times)
    ref = ensemble_decay(SMALL, 5, 2, times)
    assert np.allclose(dc.values, ref.values, rtol=1e-9)
    mean, *_ = slowest_mode_stats(SMALL, 5, 2)
    assert np.mean(lam0[lam0 > 1e-10]) == pytest.approx(mean, rel=1e-9)


def test_rp_dep_comparison_runs():
    rp_full, rp_dep, (f_full, f_dep, full, dep) = rp_dep_comparison(SMALL, 4, 0)
    assert f_dep.R_d == 0.0
    assert rp_full >= 0 and rp_dep > 0


def test_mode_profile_conserves_weight_and_wraps():
    box = BoxGeometry(60.0)
    nuc = np.array([[0.1, 0.1, 5.0], [30.0, 30.0, 1.0], [59.9, 10.0, 2.0]])
    real = SpinRealization(nuc, np.zeros((0, 3)), box)
    rows = mode_profile_2d(real, np.array([1.0, -2.0, 0.5]), n_grid=6)
    assert rows.shape == (36, 3)
    assert rows[:, 2].sum() == pytest.approx(3.5)
    # a site at the grid corner spreads over the four wrapped corner cells
    corner = rows[(rows[:, 0] == 5.0) | (rows[:, 0] == 55.0)]
    assert corner[:, 2].sum() > 0


def test_cosine_similarity():
    assert cosine_similarity([1, 0], [1, 0]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([0, 0], [1, 1]) == 0.0


def test_spectral_gap_ratio():
    lam = np.array([0.0, 0.01, 0.02, 0.03, 0.04, 100.0, 200.0])
    assert spectral_gap_ratio(lam) == pytest.approx(2500.0)
    assert np.isnan(spectral_gap_ratio([1.0]))


def test_eigenvalue_spectrum_and_modes():
    spec = eigenvalue_spectrum(SMALL, [0.011, 0.05], 0)
    assert set(spec) == {0.011, 0.05}
    assert all(np.all(v >= -1e-10) for v in spec.values())
    real, modes = realization_modes(SMALL, 0)
    assert modes.vectors.shape == (real.n_nuclei, real.n_nuclei)
