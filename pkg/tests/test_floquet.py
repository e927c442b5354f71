import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid
from scipy.linalg import expm

from spinnet.engine import DELAY, PULSE_90
from spinnet.floquet import (
    PulseSequence,
    _rodrigues,
    compute_floquet,
    euler_zyz,
    filter_function,
    find_kappa_zero,
    fourier_coeffs,
    kappa,
    kappa_scan,
    micromotion,
    period_propagator,
    so3_of,
    su2,
    wigner_d,
)

SEQ_I = PulseSequence(90.0, PULSE_90, DELAY, 0.0)


def _wigner_series(l, m, n, b):
    """Wigner's closed-form sum for d^l_{mn}(b)."""
    f = math.factorial
    out = 0.0
    for s in range(0, 2 * l + 1):
        a1, a2, a3, a4 = l + n - s, s, m - n + s, l - m - s
        if min(a1, a2, a3, a4) < 0:
            continue
        num = (-1) ** (m - n + s) * math.sqrt(f(l + m) * f(l - m) * f(l + n) * f(l - n))
        out += num / (f(a1) * f(a2) * f(a3) * f(a4)) * math.cos(b / 2) ** (2 * l + n - m - 2 * s) * math.sin(b / 2) ** (m - n + 2 * s)
    return out


def _jy(l):
    ms = np.arange(l, -l - 1, -1)
    jp = np.zeros((2 * l + 1, 2 * l + 1))
    for i in range(1, 2 * l + 1):
        m = ms[i]
        jp[i - 1, i] = math.sqrt(l * (l + 1) - m * (m + 1))
    return (jp - jp.T) / 2j, ms


@pytest.mark.parametrize("l", [1, 2])
def test_wigner_d_matches_series_and_matrix_exponential(l):
    Jy, ms = _jy(l)
    for b in (0.0, 0.3, 1.1, 2.5, math.pi):
        D = expm(-1j * b * Jy)
        for i, m in enumerate(ms):
            for j, n in enumerate(ms):
                v = wigner_d(l, int(m), int(n), b)
                assert v == pytest.approx(_wigner_series(l, int(m), int(n), b), abs=1e-12)
                assert v == pytest.approx(D[i, j].real, abs=1e-12)


def test_wigner_d_rejects_bad_indices():
    with pytest.raises(ValueError):
        wigner_d(3, 0, 0, 0.1)
    with pytest.raises(ValueError):
        wigner_d(1, 2, 0, 0.1)


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-6, 6))
def test_su2_to_so3_is_rodrigues(axis, angle):
    n = np.array(axis)
    if np.linalg.norm(n) < 1e-3:
        return
    assert np.allclose(so3_of(su2(n, angle)), _rodrigues(n, [angle])[0], atol=1e-12)


@settings(max_examples=50)
@given(st.floats(-3, 3), st.floats(0.01, 3.1), st.floats(-3, 3))
def test_euler_zyz_reconstructs(a, b, g):
    def rz(x):
        return _rodrigues([0, 0, 1], [x])[0]

    def ry(x):
        return _rodrigues([0, 1, 0], [x])[0]

    R = rz(a) @ ry(b) @ rz(g)
    A, B, G = euler_zyz(R)
    assert np.allclose(rz(A[0]) @ ry(B[0]) @ rz(G[0]), R, atol=1e-10)


def _direct_average(seq, fn, n=8192):
    """Trapezoid average over one period of fn(u(t)), u = R(t)^T z, on the sampled micromotion."""
    mm = micromotion(seq, n)
    R = mm["R"]
    u = np.einsum("tji,j->ti", R, np.array([0.0, 0.0, 1.0]))
    vals = fn(u, mm["floquet"].axis, mm["times"])
    return trapezoid(vals, mm["times"], axis=0) / seq.period


@pytest.mark.parametrize(
    "seq",
    [SEQ_I, replace(SEQ_I, detuning=1200.0), replace(SEQ_I, detuning=4000.0, phase=30.0),
     PulseSequence(5.0, PULSE_90 * 5 / 90, DELAY, 5000.0), PulseSequence(60.0, 20e-6, 30e-6, 800.0)],
)
def test_kappa_wigner_route_matches_direct_vector_route(seq):
    direct = _direct_average(seq, lambda u, n, t: 1.5 * (u @ n) ** 2 - 0.5)
    assert kappa(seq) == pytest.approx(direct, abs=2e-4)


@pytest.mark.parametrize("seq", [SEQ_I, replace(SEQ_I, detuning=2000.0), PulseSequence(5.0, PULSE_90 * 5 / 90, DELAY, 5000.0)])
def test_sideband_weights_match_direct_projections(seq):
    floq = period_propagator(seq)
    c1 = fourier_coeffs(seq, 1, 50, floq=floq)
    c0 = fourier_coeffs(seq, 0, 50, floq=floq)
    # |c^{+1}|^2 summed is the mean transverse weight (1 - (n.u)^2) / 2
    transverse = _direct_average(seq, lambda u, n, t: 0.5 * (1 - (u @ n) ** 2))
    assert np.sum(np.abs(c1) ** 2) == pytest.approx(transverse, abs=2e-4)
    # c^0_k are the Fourier coefficients of n.u(t)
    mm = micromotion(seq, 8192)
    u = np.einsum("tji,j->ti", mm["R"], np.array([0.0, 0.0, 1.0]))
    f = u @ floq.axis
    for k in (-2, 0, 1, 3):
        direct = trapezoid(f * np.exp(-1j * k * floq.omega_d * mm["times"]), mm["times"]) / seq.period
        assert c0[k + 50] == pytest.approx(direct, abs=2e-4)


def test_parseval_total_weight():
    floq = compute_floquet(replace(SEQ_I, detuning=1500.0))
    total = sum(np.sum(np.abs(c) ** 2) for c in floq.c_k.values())
    assert total == pytest.approx(1.0, abs=1e-3)


def test_static_frame_kappa_is_one():
    seq = PulseSequence(0.0, 0.0, 1e-4, 0.0)
    assert period_propagator(seq).degenerate
    assert kappa(seq) == pytest.approx(1.0, abs=1e-12)


def test_ideal_spin_lock_kappa():
    # continuous resonant drive: effective axis transverse, no micromotion
    seq = PulseSequence(90.0, 78e-6, 0.0, 0.0)
    assert kappa(seq) == pytest.approx(-0.5, abs=1e-3)


def test_regime_one_effective_frame():
    floq = compute_floquet(SEQ_I)
    assert floq.kappa == pytest.approx(-0.5, abs=1e-3)
    assert floq.theta_eff == pytest.approx(math.pi / 2, abs=1e-9)
    # quarter turn per 78 us period
    assert floq.omega_eff == pytest.approx((math.pi / 2) / 78e-6, rel=1e-9)


def test_kappa_zero_crossing_in_window():
    assert kappa(replace(SEQ_I, detuning=1500.0)) * kappa(replace(SEQ_I, detuning=3500.0)) < 0
    root = find_kappa_zero(SEQ_I, 1500.0, 3500.0)
    assert 1500.0 < root < 3500.0
    assert abs(kappa(replace(SEQ_I, detuning=root))) < 1e-6


def test_phase_covariance():
    a = compute_floquet(replace(SEQ_I, detuning=1000.0))
    b = compute_floquet(replace(SEQ_I, detuning=1000.0, phase=40.0))
    assert b.kappa == pytest.approx(a.kappa, abs=1e-9)
    assert b.omega_eff == pytest.approx(a.omega_eff, rel=1e-12)
    assert (b.phi_eff - a.phi_eff) % (2 * math.pi) == pytest.approx(math.radians(40.0), abs=1e-9)
    assert np.allclose(np.abs(b.c_k[1]), np.abs(a.c_k[1]), atol=1e-6)


def test_micromotion_is_periodic():
    mm = micromotion(replace(SEQ_I, detuning=700.0), 512)
    assert mm["defect"] < 1e-10


def test_omega_eff_folded():
    for dw in (0.0, 3000.0, 9000.0):
        seq = replace(SEQ_I, detuning=dw)
        f = period_propagator(seq)
        assert 0 <= f.omega_eff <= seq.omega_d / 2 + 1e-9


def test_filter_function_and_scan_shapes():
    floq = compute_floquet(SEQ_I, K=10)
    comb = filter_function(floq.c_k[1], floq.omega_d)
    assert comb.shape == (21, 2)
    assert comb[10, 0] == 0.0
    rows = kappa_scan(SEQ_I, [0.0, 1000.0])
    assert rows.shape == (2, 5) and rows[0, 1] == pytest.approx(-0.5, abs=1e-3)


def test_invalid_sequences():
    with pytest.raises(ValueError):
        PulseSequence(90.0, -1e-6, 1e-5)
    with pytest.raises(ValueError):
        PulseSequence(90.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        fourier_coeffs(SEQ_I, 2)
