"""Electron noise: Lorentzian spectral density, Floquet filtering and laser pumping.

The Lorentzian is unit-area, ``J_e(w) = 2 tau_c / (1 + w^2 tau_c^2)`` so that
``int J_e dw / 2pi = 1``; any other prefactor is absorbed in ``eta``.

The optical pumping model is a seven-level classical rate equation over
``{|g,-1>, |g,0>, |g,+1>, |e,-1>, |e,0>, |e,+1>, |s>}``. Its ``S_z``
autocorrelation decays nearly exponentially, and the inverse correlation time
grows linearly with the pump strength ``Gamma_p``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math
import warnings

import numpy as np
from scipy.linalg import expm, null_space
from scipy.optimize import curve_fit

from .dipolar import CouplingTable
from .floquet import FloquetParams

SZ = np.array([-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0])
BASIS = ("g,-1", "g,0", "g,+1", "e,-1", "e,0", "e,+1", "s")


@dataclass(frozen=True)
class LorentzianBath:
    tau_c: float

    def __post_init__(self):
        if self.tau_c <= 0:
            raise ValueError("tau_c must be positive")


def j_lorentzian(omega, bath: LorentzianBath):
    omega = np.asarray(omega, dtype=float)
    tc = bath.tau_c
    return 2 * tc / (1 + (omega * tc) ** 2)


def filter_weight(floq: FloquetParams, bath: LorentzianBath, q: int = 1) -> float:
    """sum_k |c_k^q|^2 J_e(omega_eff + k omega_d): the comb-filtered density per unit h^2."""
    c = np.asarray(floq.c_k[q])
    K = (len(c) - 1) // 2
    ks = np.arange(-K, K + 1)
    return float(np.sum(np.abs(c) ** 2 * j_lorentzian(floq.omega_eff + ks * floq.omega_d, bath)))


def j_env(table: CouplingTable, floq: FloquetParams, bath: LorentzianBath, i=None):
    """Filtered density at omega_eff for nucleus ``i`` (all nuclei when ``i`` is None).

    Units: (rad/s)^2 * s. Zero for nuclei without electrons.
    """
    h2 = np.sum(table.h**2, axis=1) if table.h.size else np.zeros(table.n_nuclei)
    out = h2 * filter_weight(floq, bath)
    return out if i is None else float(out[i])


# ----------------------------------------------------------------------------
# optical pumping model


@dataclass(frozen=True)
class PumpModel:
    """Rates in s^-1. ``gamma_sg`` defaults to uniform singlet branching gamma_s / 3."""

    Gamma_p: float = 0.0
    gamma_eg: float = 65e6
    gamma_es: float = 50e6
    gamma_s: float = 1e6
    gamma_01: float = 0.5e6
    gamma_sg: float | None = None
    R1_E: float = 10.0
    beta_omega: float = 0.1265

    @property
    def sg(self) -> float:
        return self.gamma_s / 3 if self.gamma_sg is None else self.gamma_sg

    def scaled(self, factor: float) -> "PumpModel":
        """All rates multiplied by ``factor`` (Gamma_p is dimensionless and unchanged)."""
        return replace(
            self,
            gamma_eg=self.gamma_eg * factor,
            gamma_es=self.gamma_es * factor,
            gamma_s=self.gamma_s * factor,
            gamma_01=self.gamma_01 * factor,
            gamma_sg=self.sg * factor,
            R1_E=self.R1_E * factor,
        )


def lindblad_generator(pm: PumpModel) -> np.ndarray:
    """Population generator D + R over the seven-level basis; columns sum to zero."""
    rates = dict(
        Gamma_p=pm.Gamma_p,
        gamma_eg=pm.gamma_eg,
        gamma_es=pm.gamma_es,
        gamma_s=pm.gamma_s,
        gamma_01=pm.gamma_01,
        gamma_sg=pm.sg,
        R1_E=pm.R1_E,
    )
    bad = [k for k, v in rates.items() if v < 0 or not math.isfinite(v)]
    if bad:
        raise ValueError(f"negative or non-finite rates: {bad}")

    eg, es, g01, sg = pm.gamma_eg, pm.gamma_es, pm.gamma_01, pm.sg
    pump = pm.Gamma_p * sg
    D = np.zeros((7, 7))
    # decay of the excited triplet (columns 3-5) and singlet (column 6)
    D[0, 3], D[1, 3], D[6, 3] = eg, g01, es
    D[0, 4], D[1, 4], D[2, 4] = g01, eg, g01
    D[1, 5], D[2, 5], D[6, 5] = g01, eg, es
    D[0, 6] = D[1, 6] = D[2, 6] = sg
    # spin-conserving optical excitation
    D[3, 0] = D[4, 1] = D[5, 2] = pump

    th_p = math.exp(-pm.beta_omega / 2)
    th_m = math.exp(pm.beta_omega / 2)
    Rb = pm.R1_E * np.array(
        [[-th_m, th_p, 0.0], [th_m, -(th_p + th_m), th_p], [0.0, th_m, -th_p]]
    )
    Rfull = np.zeros((7, 7))
    Rfull[:3, :3] = Rb
    Rfull[3:6, 3:6] = Rb
    gen = D + Rfull
    np.fill_diagonal(gen, 0.0)
    for j in range(7):
        gen[j, j] = -math.fsum(gen[:, j])
    return gen


def equilibrium(gen: np.ndarray) -> np.ndarray:
    ns = null_space(gen, rcond=1e-13)
    if ns.shape[1] != 1:
        raise ValueError(f"equilibrium not unique (null space dimension {ns.shape[1]})")
    p = ns[:, 0]
    p = p / p.sum()
    return np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum()


def correlation_function(gen: np.ndarray, taus) -> np.ndarray:
    """C(tau) = sum_mn Sz_m [exp(gen tau)]_mn P_eq_n Sz_n."""
    peq = equilibrium(gen)
    w = peq * SZ
    return np.array([SZ @ expm(gen * t) @ w for t in np.atleast_1d(taus)])


def _relaxation_scale(gen: np.ndarray) -> float:
    """Slowest non-zero decay rate of the generator."""
    ev = np.sort(np.abs(np.linalg.eigvals(gen).real))
    nz = ev[ev > 1e-9 * max(ev.max(), 1.0)]
    return float(nz.min())


def fit_correlation_time(gen: np.ndarray, n_tau: int = 120):
    """Single-exponential fit of the connected, normalized C(tau).

    Returns (tau_c, r_squared).
    """
    peq = equilibrium(gen)
    mean_sz = float(peq @ SZ)
    c_inf = mean_sz**2
    slow = _relaxation_scale(gen)
    taus = np.linspace(0.0, 4.0 / slow, n_tau)
    C = correlation_function(gen, taus)
    c0 = C[0] - c_inf
    if c0 <= 0:
        raise ValueError("correlation function has no connected part")
    y = (C - c_inf) / c0
    popt, _ = curve_fit(lambda t, r: np.exp(-r * t), taus, y, p0=[slow])
    resid = y - np.exp(-popt[0] * taus)
    r2 = 1 - np.sum(resid**2) / np.sum((y - y.mean()) ** 2)
    return 1.0 / popt[0], float(r2)


@dataclass
class LaserMap:
    """Linear laser-power maps: 1/tau_c(P) = intercept + slope P, T2(P) linear between two anchors."""

    slope: float  # s^-1 per W
    intercept: float  # s^-1
    T2_min: float = 2.5e-5
    T2_max: float = 5.0e-5
    P_max: float = 7.5
    r_squared: float | None = None
    gamma_p: np.ndarray | None = None
    inv_tau_c: np.ndarray | None = None

    def __post_init__(self):
        if self.intercept <= 0:
            raise ValueError("zero-power inverse correlation time must be positive")

    def inv_tau_c_at(self, power):
        out = self.intercept + self.slope * np.asarray(power, dtype=float)
        if np.any(out <= 0):
            raise ValueError("inverse correlation time must stay positive")
        return out

    def tau_c(self, power) -> float:
        return float(1.0 / self.inv_tau_c_at(power))

    def T2(self, power) -> float:
        return float(self.T2_min + (self.T2_max - self.T2_min) * power / self.P_max)

    @classmethod
    def anchored(cls, tau_c0: float, P_half: float = 7.5, **kw) -> "LaserMap":
        """Map with tau_c(0) = tau_c0 and tau_c(P_half) = tau_c0 / 2."""
        return cls(slope=1.0 / (tau_c0 * P_half), intercept=1.0 / tau_c0, **kw)


def tau_c_of_power(gamma_ps, base: PumpModel | None = None) -> LaserMap:
    """Fit tau_c at each pump strength, then regress 1/tau_c linearly on Gamma_p.

    The returned map is in pump units (slope per unit Gamma_p).
    """
    gamma_ps = np.asarray(gamma_ps, dtype=float)
    if len(gamma_ps) < 4:
        raise ValueError("need at least 4 pump strengths")
    base = base or PumpModel()
    inv = []
    for gp in gamma_ps:
        tc, _ = fit_correlation_time(lindblad_generator(replace(base, Gamma_p=float(gp))))
        inv.append(1.0 / tc)
    inv = np.array(inv)
    if np.any(np.diff(inv) * np.sign(np.diff(gamma_ps)) < 0):
        warnings.warn("1/tau_c is not monotone in Gamma_p; pump model parameters look suspect")
    slope, intercept = np.polyfit(gamma_ps, inv, 1)
    fit = intercept + slope * gamma_ps
    r2 = 1 - np.sum((inv - fit) ** 2) / np.sum((inv - inv.mean()) ** 2)
    return LaserMap(
        slope=float(slope), intercept=float(intercept), r_squared=float(r2),
        gamma_p=gamma_ps, inv_tau_c=inv,
    )
