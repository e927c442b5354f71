"""Polarization spreading from a single site under pure hopping.

One nucleus near the box center starts fully polarized; with no electrons the
generator is ``W`` alone and the total is conserved. The mean squared
displacement ``<r^2>(t) = sum_i |r_i - r_0|^2 p_i(t)`` is fit to
``6 D t^alpha`` in log-log space, up to the time the front reaches the faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .dipolar import build_coupling_table
from .engine import build_W, map_ordered, realization_seed
from .lattice import BoxGeometry, Concentrations, min_image, make_realization

DEFAULT_TRANSPORT_TIMES = np.logspace(-2, 3, 201)
REFERENCE_C_NUC = 0.011


def default_times(c_nuc: float) -> np.ndarray:
    """Log grid scaled by (0.011 / c_nuc)^2, the typical pair-rate scaling with density."""
    return DEFAULT_TRANSPORT_TIMES * (REFERENCE_C_NUC / c_nuc) ** 2


@dataclass
class TransportResult:
    D: float  # Angstrom^2 / s^alpha
    alpha: float
    D_err: float
    alpha_err: float
    times: np.ndarray
    msd: np.ndarray
    msd_err: np.ndarray
    t_cutoff: float
    cutoff_flagged: bool
    n_configs: int
    n_nuclei_mean: float = 0.0
    axis_moments: np.ndarray | None = None  # (3, n_times)
    axis_moments_err: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def msd(P, disp) -> np.ndarray:
    """Mean squared displacement per time from trajectories ``P`` (n_times, N)."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    disp = np.asarray(disp, dtype=float).reshape(-1, 3)
    totals = P.sum(axis=1)
    if np.any(np.abs(totals - 1.0) > 1e-6):
        raise ValueError(f"total polarization drifted by {np.max(np.abs(totals - 1.0)):.2e}")
    return P @ np.sum(disp**2, axis=1)


def boundary_shell(positions, box: BoxGeometry, width: float | None = None) -> np.ndarray:
    """Sites within ``width`` (default one lattice constant) of any box face."""
    w = box.lattice_constant if width is None else width
    pos = np.asarray(positions, dtype=float)
    return np.any((pos < w) | (pos > box.side_length - w), axis=1)


def front_cutoff(P, positions, box: BoxGeometry, times, threshold: float = 1e-3):
    """First sampled time at which the face shell holds more than ``threshold`` of the polarization.

    Returns (t_cutoff, flagged); flagged is True when the front never arrives
    and the last time is returned.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    times = np.asarray(times, dtype=float)
    shell = boundary_shell(positions, box)
    frac = np.atleast_2d(P)[:, shell].sum(axis=1)
    hit = np.nonzero(frac > threshold)[0]
    if len(hit) == 0:
        return float(times[-1]), True
    return float(times[hit[0]]), False


def fit_transport(times, msd_values, t_cutoff: float, t_min: float = 0.0, min_points: int = 20, min_decades: float = 1.5):
    """OLS of log<r^2> = log(6D) + alpha log t over t_min <= t < t_cutoff.

    Returns (D, alpha, D_err, alpha_err).
    """
    times = np.asarray(times, dtype=float)
    msd_values = np.asarray(msd_values, dtype=float)
    sel = (times >= t_min) & (times < t_cutoff) & (msd_values > 0) & (times > 0)
    if sel.sum() < min_points:
        raise ValueError(f"need >= {min_points} points below the cutoff, got {int(sel.sum())}")
    tw = times[sel]
    if math.log10(tw[-1] / tw[0]) < min_decades:
        raise ValueError(f"fit window spans fewer than {min_decades} decades")
    x = np.log(tw)
    y = np.log(msd_values[sel])
    (alpha, c), cov = np.polyfit(x, y, 1, cov=True)
    D = math.exp(c) / 6.0
    return D, float(alpha), D * math.sqrt(cov[1, 1]), float(math.sqrt(cov[0, 0]))


def center_nucleus(nuclei, box: BoxGeometry) -> int:
    centre = np.full(3, box.side_length / 2)
    return int(np.argmin(np.linalg.norm(nuclei - centre, axis=1)))


def trajectory(c_nuc: float, box: BoxGeometry, seed: int, times, kappa: float, T2: float, B_axis=(0.0, 0.0, 1.0)):
    """Single-site spreading run.

    Returns (P, displacements, absolute positions) or None when fewer than two nuclei.
    """
    real = make_realization(box, Concentrations(c_nuc, 0.0), seed)
    if real.n_nuclei < 2:
        return None
    table = build_coupling_table(real, B_axis)
    W = build_W(table, kappa, T2)
    i0 = center_nucleus(real.nuclei, box)
    lam, V = np.linalg.eigh(W)
    P = (np.exp(np.outer(times, lam)) * V[i0]) @ V.T
    disp = min_image(real.nuclei[i0], real.nuclei, box)
    return P, disp, real.nuclei


def _traj_stats(args):
    c_nuc, box, seed, times, kappa, T2 = args
    out = trajectory(c_nuc, box, seed, times, kappa, T2)
    if out is None:
        return None
    P, disp, pos = out
    shell = boundary_shell(pos, box)
    return msd(P, disp), P @ disp**2, P[:, shell].sum(axis=1), len(disp)


def transport_run(
    c_nuc: float,
    box_cells: int = 25,
    n_configs: int = 100,
    seed: int = 0,
    times=None,
    kappa: float = -0.5,
    T2: float = 2.5e-5,
    threshold: float = 1e-3,
    t_min: float = 0.0,
    workers: int = 1,
) -> TransportResult:
    """Ensemble MSD over independent nucleus placements and its power-law fit."""
    times = default_times(c_nuc) if times is None else np.asarray(times, dtype=float)
    box = BoxGeometry.from_cells(box_cells)
    jobs = [(c_nuc, box, realization_seed(seed, i), times, kappa, T2) for i in range(n_configs)]
    res = [r for r in map_ordered(_traj_stats, jobs, workers) if r is not None]
    if not res:
        raise ValueError("no realization had at least two nuclei")
    m = np.array([r[0] for r in res])
    ax = np.array([r[1] for r in res])
    shell = np.array([r[2] for r in res]).mean(axis=0)
    n = len(res)
    mean = m.sum(axis=0) / n
    err = m.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(len(times))
    hit = np.nonzero(shell > threshold)[0]
    t_cut, flagged = (float(times[hit[0]]), False) if len(hit) else (float(times[-1]), True)
    D, alpha, D_err, a_err = fit_transport(times, mean, t_cut, t_min=t_min)
    return TransportResult(
        D=D, alpha=alpha, D_err=D_err, alpha_err=a_err,
        times=times, msd=mean, msd_err=err,
        t_cutoff=t_cut, cutoff_flagged=flagged, n_configs=n,
        n_nuclei_mean=float(np.mean([r[3] for r in res])),
        axis_moments=ax.mean(axis=0).T,
        axis_moments_err=(ax.std(axis=0, ddof=1).T / math.sqrt(n)) if n > 1 else None,
        meta={"c_nuc": c_nuc, "box_cells": box_cells, "kappa": kappa, "T2": T2, "seed": seed},
    )


def finite_size_scan(
    c_nuc: float,
    sizes,
    n_runs: int = 5,
    n_traj: int = 20,
    seed: int = 0,
    times=None,
    kappa: float = -0.5,
    T2: float = 2.5e-5,
    t_min: float = 0.0,
    workers: int = 1,
):
    """Rows (N_sites, N^{-1/3}, alpha, alpha_err, D, D_err) per box size.

    Each size runs ``n_runs`` independent ensembles of ``n_traj`` trajectories;
    the reported value is their mean and the error their standard error.
    """
    rows = []
    for cells in sizes:
        a, d = [], []
        for run in range(n_runs):
            tr = transport_run(
                c_nuc, int(cells), n_traj, seed=realization_seed(seed, 1000 * int(cells) + run),
                times=times, kappa=kappa, T2=T2, t_min=t_min, workers=workers,
            )
            a.append(tr.alpha)
            d.append(tr.D)
        a, d = np.array(a), np.array(d)
        k = math.sqrt(n_runs) if n_runs > 1 else 1.0
        n_sites = 8 * int(cells) ** 3
        rows.append((
            n_sites, n_sites ** (-1 / 3),
            a.mean(), a.std(ddof=1) / k if n_runs > 1 else 0.0,
            d.mean(), d.std(ddof=1) / k if n_runs > 1 else 0.0,
        ))
    return np.array(rows)
