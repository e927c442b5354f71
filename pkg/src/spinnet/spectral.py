"""Eigenmode analysis of the generator ``M = W + diag(R)``.

With ``-M = V diag(lambda) V^T`` the total polarization decomposes as
``sum_i p_i(t) = sum_j a_j exp(-lambda_j t)`` with ``a_j = (v_j . p0)(v_j . 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math

import numpy as np

from .engine import (
    SimConfig,
    build_realization,
    ensemble_decay,
    map_ordered,
    realization_generator,
    realization_seed,
)
from .fitkit import fit_emergent
from .lattice import BoxGeometry, SpinRealization

ZERO_TOL = 1e-10


@dataclass
class ModeSet:
    lambdas: np.ndarray  # ascending decay rates of -M
    amplitudes: np.ndarray
    vectors: np.ndarray  # columns are modes

    def total(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(-np.outer(t, self.lambdas)) @ self.amplitudes


def decompose(M, p0) -> ModeSet:
    M = np.asarray(M, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    lam, V = np.linalg.eigh(-M)
    a = (V.T @ p0) * V.sum(axis=0)
    return ModeSet(lambdas=lam, amplitudes=a, vectors=V)


def asymptotic_form(modes: ModeSet, t):
    """Leading-mode form ``a0 e^{-l0 t} exp(sum_{j>0} (a_j / a0) e^{-(l_j - l0) t})``.

    Returns (value, valid); ``valid`` is False when some ``|a_j / a0| >= 1``
    while ``(l1 - l0) t < 1``, where the expansion is not justified.
    """
    a0 = modes.amplitudes[0]
    if a0 == 0:
        raise ValueError("slowest mode carries no initial weight")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    l0 = modes.lambdas[0]
    ratio = modes.amplitudes[1:] / a0
    corr = np.exp(-np.outer(t, modes.lambdas[1:] - l0)) @ ratio
    value = a0 * np.exp(-l0 * t) * np.exp(corr)
    gap = modes.lambdas[1] - l0 if len(modes.lambdas) > 1 else np.inf
    big = np.max(np.abs(ratio)) >= 1 if len(ratio) else False
    valid = ~(big & (gap * t < 1))
    return value, valid


def _slowest(args):
    cfg, seed = args
    real = build_realization(cfg, seed)
    if real.n_nuclei == 0:
        return None
    gm = realization_generator(cfg, real)
    lam = np.linalg.eigvalsh(-gm.M) if gm.W.any() else np.sort(-gm.R)
    return float(lam[0])


def slowest_mode_stats(cfg: SimConfig, n_configs: int, seed: int, workers: int = 1):
    """Mean and standard error of the slowest decay rate over realizations.

    Realizations whose slowest rate is zero (no relaxation reaches them) are
    excluded and counted. Returns (mean, stderr, n_used, n_zero).
    """
    jobs = [(cfg, realization_seed(seed, i)) for i in range(n_configs)]
    lam0 = [x for x in map_ordered(_slowest, jobs, workers) if x is not None]
    lam0 = np.array(lam0)
    zero = np.abs(lam0) <= ZERO_TOL
    used = lam0[~zero]
    if len(used) == 0:
        return 0.0, 0.0, 0, int(zero.sum())
    se = used.std(ddof=1) / math.sqrt(len(used)) if len(used) > 1 else 0.0
    return float(used.mean()), float(se), len(used), int(zero.sum())


def _modes_and_curve(args):
    cfg, seed, times = args
    real = build_realization(cfg, seed)
    n = real.n_nuclei
    if n == 0:
        return None
    if real.n_electrons == 0 or not cfg.with_R:
        return 0.0, np.ones(len(times))
    gm = realization_generator(cfg, real)
    if not gm.W.any():
        return float(np.min(-gm.R)), np.exp(np.outer(times, gm.R)).mean(axis=1)
    modes = decompose(gm.M, np.full(n, 1.0 / n))
    return float(modes.lambdas[0]), modes.total(times)


def slowest_modes_and_decay(cfg: SimConfig, n_configs: int, seed: int, times=None, workers: int = 1):
    """One eigendecomposition per realization gives both its slowest rate and its decay curve.

    Returns (lambda0 per kept realization, DecayCurve).
    """
    from .engine import DEFAULT_TIMES, summarize

    times = DEFAULT_TIMES if times is None else np.asarray(times, dtype=float)
    jobs = [(cfg, realization_seed(seed, i), times) for i in range(n_configs)]
    out = [r for r in map_ordered(_modes_and_curve, jobs, workers) if r is not None]
    if not out:
        raise ValueError("every realization was empty")
    lam0 = np.array([r[0] for r in out])
    dc = summarize(np.array([r[1] for r in out]), times, n_configs - len(out), cfg.regime)
    return lam0, dc


def rp_dep_comparison(cfg: SimConfig, n_configs: int, seed: int, times=None, window=None, workers: int = 1):
    """R_p of the full model and of the hopping-free model with identical realizations.

    The hopping-free curve is fit with R_d held at zero. Returns (R_p full, R_p dep, fits).
    """
    full = ensemble_decay(cfg, n_configs, seed, times, workers)
    dep = ensemble_decay(replace(cfg, with_W=False), n_configs, seed, times, workers)
    f_full = fit_emergent(full, window=window)
    f_dep = fit_emergent(dep, window=window, fix="R_d")
    return f_full.R_p, f_dep.R_p, (f_full, f_dep, full, dep)


def mode_profile_2d(real: SpinRealization, vector, n_grid: int = 60, absolute: bool = True) -> np.ndarray:
    """Project per-nucleus weights onto the xy-plane with periodic bilinear (cloud-in-cell) binning.

    Rows are (x_center, y_center, value) over an ``n_grid`` x ``n_grid`` grid.
    """
    box = real.box
    L = box.side_length
    h = L / n_grid
    w = np.abs(np.asarray(vector, dtype=float)) if absolute else np.asarray(vector, dtype=float)
    grid = np.zeros((n_grid, n_grid))
    if len(w):
        # node j sits at (j + 1/2) h
        gx = real.nuclei[:, 0] / h - 0.5
        gy = real.nuclei[:, 1] / h - 0.5
        ix = np.floor(gx).astype(int)
        iy = np.floor(gy).astype(int)
        fx = gx - ix
        fy = gy - iy
        for dx, wx in ((0, 1 - fx), (1, fx)):
            for dy, wy in ((0, 1 - fy), (1, fy)):
                np.add.at(grid, ((ix + dx) % n_grid, (iy + dy) % n_grid), w * wx * wy)
    centers = (np.arange(n_grid) + 0.5) * h
    X, Y = np.meshgrid(centers, centers, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), grid.ravel()])


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def realization_modes(cfg: SimConfig, seed: int):
    """(realization, ModeSet) with uniform p0; None when the realization has no nuclei."""
    real = build_realization(cfg, seed)
    n = real.n_nuclei
    if n == 0:
        return None
    gm = realization_generator(cfg, real)
    return real, decompose(gm.M, np.full(n, 1.0 / n))


def eigenvalue_spectrum(cfg: SimConfig, c_nucs, seed: int) -> dict:
    """Sorted decay rates of ``-M`` for one realization per 13C concentration."""
    out = {}
    for c in c_nucs:
        c_cfg = replace(cfg, c_nuc=float(c))
        real = build_realization(c_cfg, realization_seed(seed, 0))
        if real.n_nuclei == 0:
            out[float(c)] = np.zeros(0)
            continue
        gm = realization_generator(c_cfg, real)
        out[float(c)] = np.linalg.eigvalsh(-gm.M)
    return out


def spectral_gap_ratio(lambdas, fast_fraction: float = 0.5) -> float:
    """Largest ratio between consecutive positive rates among the fastest ``fast_fraction`` modes.

    A value above 10 marks a spectrum split into a few fast modes and a slow bulk.
    """
    lam = np.sort(np.asarray(lambdas, dtype=float))
    lam = lam[lam > ZERO_TOL]
    if len(lam) < 3:
        return float("nan")
    start = int(len(lam) * (1 - fast_fraction))
    sub = lam[max(start - 1, 0):]
    return float(np.max(sub[1:] / sub[:-1]))
