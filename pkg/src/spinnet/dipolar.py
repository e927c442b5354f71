"""Secular dipolar coupling constants between nuclei and electrons.

Couplings are returned in rad/s with sign retained; distances in Angstrom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import ANGSTROM, CONSTANTS, PhysicalConstants
from .lattice import SpinRealization, min_image

MAGIC_ANGLE = float(np.arccos(1.0 / np.sqrt(3.0)))


def _angular(cos_theta):
    return 0.5 * (3.0 * np.asarray(cos_theta) ** 2 - 1.0)


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("coupling distance must be positive (coincident sites?)")
    return r


def nn_coupling(r, theta, const: PhysicalConstants = CONSTANTS):
    """13C-13C coupling d = -(mu0/4pi) hbar gamma_C^2 / r^3 * (3cos^2 theta - 1)/2."""
    r = _check_r(r) * ANGSTROM
    pref = const.dipolar_prefactor * const.hbar * const.gamma_C**2
    return -pref / r**3 * _angular(np.cos(theta))


def ne_coupling(r, theta, const: PhysicalConstants = CONSTANTS):
    """13C-electron coupling h = -(mu0/4pi) hbar gamma_C gamma_e / r^3 * (3cos^2 theta - 1)/2."""
    r = _check_r(r) * ANGSTROM
    pref = const.dipolar_prefactor * const.hbar * const.gamma_C * const.gamma_e
    return -pref / r**3 * _angular(np.cos(theta))


@dataclass
class CouplingTable:
    d: np.ndarray  # (N_C, N_C), d_ii = 0
    h: np.ndarray  # (N_C, N_e)

    @property
    def n_nuclei(self) -> int:
        return self.d.shape[0]

    @property
    def n_electrons(self) -> int:
        return self.h.shape[1]


def _pair_geometry(a, b, box, axis):
    disp = min_image(a[:, None, :], b[None, :, :], box)
    r = np.linalg.norm(disp, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_t = (disp @ axis) / r
    return r, cos_t


def build_coupling_table(
    real: SpinRealization,
    B_axis=(0.0, 0.0, 1.0),
    const: PhysicalConstants = CONSTANTS,
    with_nn: bool = True,
) -> CouplingTable:
    """All pairwise couplings of a realization under minimum-image geometry.

    ``with_nn=False`` skips the O(N_C^2) nuclear table (d is then all zeros),
    which is all a diffusionless run needs.
    """
    axis = np.asarray(B_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    nuc, el = real.nuclei, real.electrons
    n_c = len(nuc)

    d = np.zeros((n_c, n_c))
    if with_nn and n_c > 1:
        pref = const.dipolar_prefactor * const.hbar * const.gamma_C**2 / ANGSTROM**3
        # row blocks bound the memory of the (block, N, 3) displacement array
        block = max(1, 2_000_000 // n_c)
        for start in range(0, n_c, block):
            stop = min(start + block, n_c)
            r, cos_t = _pair_geometry(nuc[start:stop], nuc, real.box, axis)
            rows = np.arange(stop - start)
            r[rows, rows + start] = 1.0
            cos_t[rows, rows + start] = 0.0
            if np.any(r <= 0):
                raise ValueError("coincident nuclei in realization")
            blk = -pref / r**3 * _angular(cos_t)
            blk[rows, rows + start] = 0.0
            d[start:stop] = blk

    if len(el) and n_c:
        r, cos_t = _pair_geometry(nuc, el, real.box, axis)
        h = ne_coupling(r, np.arccos(np.clip(cos_t, -1.0, 1.0)), const)
    else:
        h = np.zeros((n_c, len(el)))
    return CouplingTable(d=d, h=h)


def coupling_histogram(values, bins=50):
    """Histogram of |coupling|/2pi in Hz, as (bin_left_Hz, bin_right_Hz, count) rows."""
    hz = np.abs(np.asarray(values, dtype=float)).ravel() / (2 * np.pi)
    hz = hz[hz > 0]
    if hz.size == 0:
        return np.zeros((0, 3))
    edges = np.logspace(np.log10(hz.min()), np.log10(hz.max()) + 1e-12, bins + 1)
    counts, _ = np.histogram(hz, bins=edges)
    return np.column_stack([edges[:-1], edges[1:], counts])
