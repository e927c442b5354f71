"""Effective-frame description of a periodic rectangular pulse train.

One period is a rectangular pulse of flip angle ``flip_angle`` (nutation rate
``flip_angle / pulse_duration``) followed by a free delay; the resonance
offset acts during both. A zero ``pulse_duration`` means an instantaneous
pulse at the start of the period.

The one-period propagator ``U_T = exp(-i omega_eff T n.I)`` fixes the
effective axis ``n`` (polar ``theta_eff``, azimuth ``phi_eff``) and rate
``omega_eff``, folded to ``[0, omega_d / 2]``. The micromotion
``P(t) = U(t) exp(+i omega_eff t n.I)`` is periodic. Time averages over
Wigner matrices of ``P(t)^dagger`` give the dipolar scaling factor ``kappa``
and the Fourier coefficients ``c_k^q`` of the hyperfine filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np

_SIGMA = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)
_EYE2 = np.eye(2, dtype=complex)
_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PulseSequence:
    """Rectangular pulse train.

    flip_angle and phase in degrees, durations in seconds, detuning in Hz.
    """

    flip_angle: float
    pulse_duration: float
    interpulse_delay: float
    detuning: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.pulse_duration < 0 or self.interpulse_delay < 0:
            raise ValueError("durations must be non-negative")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def period(self) -> float:
        return self.pulse_duration + self.interpulse_delay

    @property
    def omega_d(self) -> float:
        return 2 * math.pi / self.period

    @property
    def delta_omega(self) -> float:
        return 2 * math.pi * self.detuning

    def field_vectors(self):
        """List of (H vector in rad/s, duration) segments plus an optional kick rotation."""
        flip = math.radians(self.flip_angle)
        ph = math.radians(self.phase)
        transverse = np.array([math.cos(ph), math.sin(ph), 0.0])
        segments = []
        kick = None
        if self.pulse_duration > 0:
            w1 = flip / self.pulse_duration
            segments.append((w1 * transverse + self.delta_omega * _Z, self.pulse_duration))
        elif flip != 0.0:
            kick = (transverse, flip)
        if self.interpulse_delay > 0:
            segments.append((self.delta_omega * _Z, self.interpulse_delay))
        return kick, segments


@dataclass
class FloquetParams:
    omega_eff: float
    theta_eff: float
    phi_eff: float
    omega_d: float
    kappa: float | None = None
    c_k: dict = field(default_factory=dict)  # q -> complex array over k = -K..K
    K: int = 0
    degenerate: bool = False

    @property
    def axis(self) -> np.ndarray:
        return _unit(self.theta_eff, self.phi_eff)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)


def _unit(theta, phi):
    return np.array(
        [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    )


# ----------------------------------------------------------------------------
# Wigner matrices


def _d1(m, n, b):
    c, s = np.cos(b), np.sin(b)
    r2 = math.sqrt(2.0)
    table = {
        (1, 1): (1 + c) / 2,
        (1, 0): -s / r2,
        (1, -1): (1 - c) / 2,
        (0, 0): c,
    }
    return _lookup(table, m, n)


def _d2(m, n, b):
    c, s = np.cos(b), np.sin(b)
    table = {
        (2, 2): ((1 + c) / 2) ** 2,
        (2, 1): -(1 + c) * s / 2,
        (2, 0): math.sqrt(3.0 / 8.0) * s**2,
        (2, -1): -(1 - c) * s / 2,
        (2, -2): ((1 - c) / 2) ** 2,
        (1, 1): (1 + c) * (2 * c - 1) / 2,
        (1, 0): -math.sqrt(1.5) * s * c,
        (1, -1): (1 - c) * (2 * c + 1) / 2,
        (0, 0): (3 * c**2 - 1) / 2,
    }
    return _lookup(table, m, n)


def _lookup(table, m, n):
    # d_{mn} = (-1)^(m-n) d_{nm} = d_{-n,-m}
    for (a, b), sign in (
        ((m, n), 1),
        ((n, m), (-1) ** (m - n)),
        ((-n, -m), 1),
        ((-m, -n), (-1) ** (m - n)),
    ):
        if (a, b) in table:
            return sign * table[(a, b)]
    raise KeyError((m, n))


def wigner_d(l: int, m: int, n: int, beta):
    """Reduced Wigner matrix element d^l_{mn}(beta) = <l m| exp(-i beta J_y) |l n>."""
    if l not in (1, 2):
        raise ValueError("only l = 1 and l = 2 are tabulated")
    if abs(m) > l or abs(n) > l:
        raise ValueError(f"|m|, |n| must not exceed l = {l}")
    return (_d1 if l == 1 else _d2)(m, n, beta)


def wigner_D_m0(l: int, m: int, alpha, beta):
    """D^l_{m0}(alpha, beta, gamma) = exp(-i m alpha) d^l_{m0}(beta); independent of gamma."""
    return np.exp(-1j * m * np.asarray(alpha)) * wigner_d(l, m, 0, beta)


# ----------------------------------------------------------------------------
# SU(2) / SO(3) helpers


def su2(axis, angle) -> np.ndarray:
    """exp(-i angle n.sigma / 2)."""
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0 or angle == 0:
        return _EYE2.copy()
    n = n / norm
    ns = np.tensordot(n, _SIGMA, axes=1)
    return math.cos(angle / 2) * _EYE2 - 1j * math.sin(angle / 2) * ns


def so3_of(U) -> np.ndarray:
    """Rotation R with U sigma_j U^dagger = sum_i R_ij sigma_i. Accepts stacks (..., 2, 2)."""
    U = np.asarray(U)
    Ud = np.conj(np.swapaxes(U, -1, -2))
    R = np.einsum("iab,...bc,jcd,...da->...ij", _SIGMA, U, _SIGMA, Ud) / 2
    return R.real


def _rodrigues(axis, angles) -> np.ndarray:
    """Stack of rotation matrices about a fixed axis, shape (len(angles), 3, 3)."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0:
        return np.broadcast_to(np.eye(3), (len(angles), 3, 3)).copy()
    n = n / norm
    K = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    s = np.sin(angles)[:, None, None]
    c = np.cos(angles)[:, None, None]
    return np.eye(3) + s * K + (1 - c) * (K @ K)


def euler_zyz(R) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """z-y-z Euler angles of a stack of rotations, unwrapped along the stack."""
    R = np.asarray(R).reshape(-1, 3, 3)
    beta = np.arccos(np.clip(R[:, 2, 2], -1.0, 1.0))
    alpha = np.arctan2(R[:, 1, 2], R[:, 0, 2])
    gamma = np.arctan2(R[:, 2, 1], -R[:, 2, 0])
    # beta = 0 or pi: alpha + gamma (or alpha - gamma) is all that is defined
    pole = np.sin(beta) < 1e-12
    if np.any(pole):
        alpha = alpha.copy()
        gamma = gamma.copy()
        alpha[pole] = np.arctan2(R[pole, 1, 0], R[pole, 0, 0])
        gamma[pole] = 0.0
    return np.unwrap(alpha), beta, np.unwrap(gamma)


# ----------------------------------------------------------------------------
# propagators


def period_propagator(seq: PulseSequence) -> FloquetParams:
    """Effective rate and axis of one period.

    The SU(2) propagator is sign-fixed to a non-negative scalar part so the
    rotation angle lies in [0, pi], i.e. omega_eff in [0, omega_d / 2].
    A near-identity propagator yields axis +z, omega_eff = 0 and
    ``degenerate=True``.
    """
    U = _period_su2(seq)
    if np.real(np.trace(U)) < 0:
        U = -U
    a0 = np.real(np.trace(U)) / 2
    # U = a0 - i a.sigma
    a = np.array([np.real(1j * np.trace(U @ s)) / 2 for s in _SIGMA])
    sin_half = np.linalg.norm(a)
    T = seq.period
    if sin_half < 1e-12:
        return FloquetParams(0.0, 0.0, 0.0, seq.omega_d, degenerate=True)
    angle = 2 * math.atan2(sin_half, a0)
    n = a / sin_half
    theta = math.acos(max(-1.0, min(1.0, n[2])))
    phi = math.atan2(n[1], n[0]) if math.hypot(n[0], n[1]) > 1e-15 else 0.0
    return FloquetParams(angle / T, theta, phi, seq.omega_d)


def _period_su2(seq: PulseSequence) -> np.ndarray:
    kick, segments = seq.field_vectors()
    U = _EYE2.copy()
    if kick is not None:
        U = su2(*kick) @ U
    for H, dur in segments:
        U = su2(H, np.linalg.norm(H) * dur) @ U
    return U


def _segment_nodes(seq: PulseSequence, n_steps: int, rule: str):
    """Per-segment (start, duration, local nodes, weights) for quadrature or sampling."""
    kick, segments = seq.field_vectors()
    T = seq.period
    out = []
    t0 = 0.0
    for H, dur in segments:
        n = max(16, int(round(n_steps * dur / T)))
        if rule == "gauss":
            x, w = np.polynomial.legendre.leggauss(n)
            out.append((H, t0, dur, (x + 1) * dur / 2, w * dur / 2))
        else:
            out.append((H, t0, dur, None, None))
        t0 += dur
    return kick, out


def _rotation_path(seq: PulseSequence, floq: FloquetParams, times) -> np.ndarray:
    """SO(3) image of P(t) at arbitrary times in [0, T]."""
    times = np.asarray(times, dtype=float)
    kick, segments = seq.field_vectors()
    R_prefix = np.eye(3)
    if kick is not None:
        R_prefix = _rodrigues(kick[0], [kick[1]])[0]
    RU = np.empty((len(times), 3, 3))
    t0 = 0.0
    filled = np.zeros(len(times), dtype=bool)
    for i, (H, dur) in enumerate(segments):
        last = i == len(segments) - 1
        sel = (times >= t0) & ((times <= t0 + dur) if last else (times < t0 + dur)) & ~filled
        if np.any(sel):
            RU[sel] = _rodrigues(H, np.linalg.norm(H) * (times[sel] - t0)) @ R_prefix
            filled |= sel
        R_prefix = _rodrigues(H, [np.linalg.norm(H) * dur])[0] @ R_prefix
        t0 += dur
    if not np.all(filled):
        RU[~filled] = R_prefix
    return RU @ _rodrigues(floq.axis, -floq.omega_eff * times)


def micromotion(seq: PulseSequence, n_steps: int = 256):
    """Sample P(t) on a uniform grid over one period (endpoints included).

    Returns a dict with ``times``, ``P`` (SU(2), shape (n+1, 2, 2)),
    ``R`` (SO(3) image of P), ``euler`` (z-y-z angles of P^dagger) and
    ``defect`` (||R(T) - 1||; P(T) itself is +-1 in SU(2)).
    """
    if n_steps < 32:
        raise ValueError("n_steps must be >= 32")
    floq = period_propagator(seq)
    times = np.linspace(0.0, seq.period, n_steps + 1)
    P = np.empty((len(times), 2, 2), dtype=complex)
    kick, segments = seq.field_vectors()
    U_prefix = su2(*kick) if kick is not None else _EYE2.copy()
    t0 = 0.0
    filled = np.zeros(len(times), dtype=bool)
    for i, (H, dur) in enumerate(segments):
        last = i == len(segments) - 1
        sel = (times >= t0) & ((times <= t0 + dur) if last else (times < t0 + dur)) & ~filled
        for j in np.flatnonzero(sel):
            P[j] = su2(H, np.linalg.norm(H) * (times[j] - t0)) @ U_prefix
        filled |= sel
        U_prefix = su2(H, np.linalg.norm(H) * dur) @ U_prefix
        t0 += dur
    for j in np.flatnonzero(~filled):
        P[j] = U_prefix
    for j, t in enumerate(times):
        P[j] = P[j] @ su2(floq.axis, -floq.omega_eff * t)
    R = so3_of(P)
    euler = euler_zyz(np.swapaxes(R, -1, -2))
    defect = float(np.linalg.norm(R[-1] - np.eye(3)))
    return {"times": times, "P": P, "R": R, "euler": euler, "defect": defect, "floquet": floq}


def _quadrature(seq: PulseSequence, floq: FloquetParams, n_steps: int):
    _, segs = _segment_nodes(seq, n_steps, "gauss")
    if not segs:  # only possible for a zero-length delay with an instantaneous kick
        raise ValueError("sequence has no time segments")
    times = np.concatenate([t0 + x for _, t0, _, x, _ in segs])
    weights = np.concatenate([w for *_, w in segs]) / seq.period
    Rp_dag = np.swapaxes(_rotation_path(seq, floq, times), -1, -2)
    alpha, beta, _ = euler_zyz(Rp_dag)
    return times, weights, alpha, beta


def _kappa_at(seq, floq, n_steps):
    _, w, alpha, beta = _quadrature(seq, floq, n_steps)
    total = 0.0 + 0.0j
    for m in range(-2, 3):
        avg = np.sum(w * wigner_D_m0(2, m, alpha, beta))
        total += np.exp(1j * m * floq.phi_eff) * wigner_d(2, m, 0, floq.theta_eff) * avg
    return total


def kappa(seq: PulseSequence, n_steps: int = 512, floq: FloquetParams | None = None) -> float:
    """Dipolar scaling factor: period average of the secular projection onto the effective axis."""
    floq = floq or period_propagator(seq)
    k1 = _kappa_at(seq, floq, n_steps)
    k2 = _kappa_at(seq, floq, 2 * n_steps)
    if abs(k2 - k1) > 1e-4:
        raise RuntimeError(f"kappa quadrature not converged: {k1} vs {k2}")
    if abs(k2.imag) > 1e-6:
        raise RuntimeError(f"kappa has imaginary residue {k2.imag:.3e}")
    return float(k2.real)


def _fourier_at(seq, floq, q, K, n_steps):
    t, w, alpha, beta = _quadrature(seq, floq, n_steps)
    f = np.zeros_like(t, dtype=complex)
    for m in range(-1, 2):
        coef = np.exp(1j * m * floq.phi_eff) * wigner_d(1, m, q, floq.theta_eff)
        f += coef * wigner_D_m0(1, m, alpha, beta)
    ks = np.arange(-K, K + 1)
    phase = np.exp(-1j * np.outer(ks, floq.omega_d * t))
    return phase @ (w * f)


def fourier_coeffs(
    seq: PulseSequence, q: int, K: int = 50, n_steps: int = 512, floq: FloquetParams | None = None
) -> np.ndarray:
    """c_k^q for k = -K..K (index k + K)."""
    if q not in (-1, 0, 1):
        raise ValueError("q must be -1, 0 or +1")
    if K < 1:
        raise ValueError("K must be >= 1")
    floq = floq or period_propagator(seq)
    # sideband resolution: at least 8 nodes per oscillation of the highest harmonic
    n_steps = max(n_steps, 8 * (2 * K + 1))
    c = _fourier_at(seq, floq, q, K, n_steps)
    c2 = _fourier_at(seq, floq, q, K, 2 * n_steps)
    if np.max(np.abs(c - c2)) > 1e-4:
        raise RuntimeError("Fourier coefficient quadrature not converged")
    parseval = float(np.sum(np.abs(c2) ** 2))
    if parseval > 1 + 1e-6:
        raise RuntimeError(f"Parseval bound violated: sum |c_k|^2 = {parseval}")
    return c2


def compute_floquet(seq: PulseSequence, K: int = 50, n_steps: int = 512) -> FloquetParams:
    """All effective-frame quantities for one sequence."""
    floq = period_propagator(seq)
    floq = replace(floq, K=K)
    floq.kappa = kappa(seq, n_steps, floq)
    floq.c_k = {q: fourier_coeffs(seq, q, K, n_steps, floq) for q in (-1, 0, 1)}
    deficit = 1.0 - sum(float(np.sum(np.abs(c) ** 2)) for c in floq.c_k.values())
    if deficit > 1e-3:
        warnings.warn(f"sideband truncation at K={K} loses {deficit:.2e} of the spectral weight")
    return floq


def filter_function(c_k, omega_d: float) -> np.ndarray:
    """Comb of the filter function: rows (omega, weight) with weight |c_k|^2 at omega = -k omega_d."""
    c_k = np.asarray(c_k)
    K = (len(c_k) - 1) // 2
    ks = np.arange(-K, K + 1)
    return np.column_stack([-ks * omega_d, np.abs(c_k) ** 2])


def kappa_scan(base: PulseSequence, detunings_hz, n_steps: int = 512, K: int = 50):
    """Rows (detuning_Hz, kappa, omega_eff, theta_eff, sum_k |c_k^{+1}|^2) over a detuning sweep."""
    rows = []
    for dw in detunings_hz:
        seq = replace(base, detuning=float(dw))
        floq = period_propagator(seq)
        k = kappa(seq, n_steps, floq)
        c = fourier_coeffs(seq, 1, K, n_steps, floq)
        rows.append((float(dw), k, floq.omega_eff, floq.theta_eff, float(np.sum(np.abs(c) ** 2))))
    return np.array(rows)


def find_kappa_zero(base: PulseSequence, lo_hz: float, hi_hz: float, n_steps: int = 512) -> float:
    """Detuning (Hz) in [lo, hi] where kappa changes sign (Brent's method)."""
    from scipy.optimize import brentq

    f = lambda dw: kappa(replace(base, detuning=dw), n_steps)  # noqa: E731
    return float(brentq(f, lo_hz, hi_hz, xtol=1e-6))
