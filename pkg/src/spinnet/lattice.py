"""Diamond-lattice spin realizations with periodic boundaries.

A realization is built in three steps::

    sites = build_diamond_sites(box)
    real = populate(sites, Concentrations(0.011, 30e-6), box, seed=7)
    real = apply_frozen_core(real, r_c=16.0)

All lengths are in Angstrom.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
import json
import math

import numpy as np

from .constants import CONSTANTS, DIAMOND_LATTICE_CONSTANT, PhysicalConstants

# conventional diamond cell: FCC + (1/4, 1/4, 1/4) basis
_FCC = np.array([[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
_DIAMOND_BASIS = np.vstack([_FCC, _FCC + 0.25])

DEFAULT_BOX_CELLS = 25


@dataclass(frozen=True)
class BoxGeometry:
    side_length: float
    lattice_constant: float = DIAMOND_LATTICE_CONSTANT

    def __post_init__(self):
        if self.lattice_constant <= 0:
            raise ValueError("lattice_constant must be positive")
        if self.side_length <= 0:
            raise ValueError("side_length must be positive")

    @classmethod
    def from_cells(cls, n_cells: int, lattice_constant: float = DIAMOND_LATTICE_CONSTANT):
        return cls(side_length=n_cells * lattice_constant, lattice_constant=lattice_constant)

    @property
    def volume(self) -> float:
        return self.side_length**3

    @property
    def n_sites_estimate(self) -> float:
        return 8.0 * (self.side_length / self.lattice_constant) ** 3


@dataclass(frozen=True)
class Concentrations:
    """Site-occupation fractions. ``c_el`` is a fraction, not ppm."""

    c_nuc: float
    c_el: float

    def __post_init__(self):
        if not 0.0 <= self.c_nuc <= 1.0:
            raise ValueError(f"c_nuc must lie in [0, 1], got {self.c_nuc}")
        if not 0.0 <= self.c_el <= 1.0:
            raise ValueError(f"c_el must lie in [0, 1], got {self.c_el}")

    @classmethod
    def from_ppm(cls, c_nuc: float, c_el_ppm: float):
        return cls(c_nuc=c_nuc, c_el=c_el_ppm * 1e-6)


@dataclass
class SpinRealization:
    nuclei: np.ndarray
    electrons: np.ndarray
    box: BoxGeometry
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nuclei = np.asarray(self.nuclei, dtype=float).reshape(-1, 3)
        self.electrons = np.asarray(self.electrons, dtype=float).reshape(-1, 3)

    @property
    def n_nuclei(self) -> int:
        return len(self.nuclei)

    @property
    def n_electrons(self) -> int:
        return len(self.electrons)

    def to_dict(self) -> dict:
        def fmt(arr):
            return [[float(x) for x in row] for row in arr]

        return {
            "seed": self.seed,
            "side_length": self.box.side_length,
            "lattice_constant": self.box.lattice_constant,
            "nuclei": fmt(self.nuclei),
            "electrons": fmt(self.electrons),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "SpinRealization":
        box = BoxGeometry(doc["side_length"], doc["lattice_constant"])
        return cls(
            nuclei=np.array(doc["nuclei"], dtype=float).reshape(-1, 3),
            electrons=np.array(doc["electrons"], dtype=float).reshape(-1, 3),
            box=box,
            seed=doc.get("seed"),
        )

    @classmethod
    def from_json(cls, text: str) -> "SpinRealization":
        return cls.from_dict(json.loads(text))


def build_diamond_sites(box: BoxGeometry) -> np.ndarray:
    """All diamond sites with coordinates in ``[0, side_length)^3``.

    Exactly ``8 * n**3`` sites when the side is ``n`` conventional cells.
    """
    a = box.lattice_constant
    ratio = box.side_length / a
    if ratio < 1.0 - 1e-9:
        raise ValueError("box is smaller than one conventional cell")
    n = int(math.ceil(ratio - 1e-9))
    idx = np.arange(n, dtype=float)
    cells = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), axis=-1).reshape(-1, 3)
    sites = (cells[:, None, :] + _DIAMOND_BASIS[None, :, :]).reshape(-1, 3) * a
    # tolerance keeps sites of an exact integer box and drops the periodic images
    inside = np.all(sites < box.side_length - 1e-9 * a, axis=1)
    return sites[inside]


@lru_cache(maxsize=8)
def cached_sites(box: BoxGeometry) -> np.ndarray:
    """Read-only cached result of :func:`build_diamond_sites`."""
    sites = build_diamond_sites(box)
    sites.setflags(write=False)
    return sites


def populate(sites: np.ndarray, conc: Concentrations, box: BoxGeometry, seed: int) -> SpinRealization:
    """Independent Bernoulli occupation of every site.

    The electron trial runs first; sites that did not receive an electron
    are then tried for a 13C nucleus.
    """
    sites = np.asarray(sites, dtype=float)
    if len(sites) == 0:
        raise ValueError("no lattice sites to populate")
    rng = np.random.default_rng(seed)
    u_el = rng.random(len(sites))
    u_nuc = rng.random(len(sites))
    is_el = u_el < conc.c_el
    is_nuc = ~is_el & (u_nuc < conc.c_nuc)
    return SpinRealization(nuclei=sites[is_nuc], electrons=sites[is_el], box=box, seed=seed)


def min_image(p1, p2, box: BoxGeometry) -> np.ndarray:
    """Displacement ``p2 - p1`` wrapped into ``[-L/2, L/2)`` per component. Broadcasts."""
    L = box.side_length
    d = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    return d - L * np.floor(d / L + 0.5)


def nucleus_electron_distances(real: SpinRealization) -> np.ndarray:
    """Minimum-image distances, shape (n_nuclei, n_electrons)."""
    if real.n_nuclei == 0 or real.n_electrons == 0:
        return np.zeros((real.n_nuclei, real.n_electrons))
    d = min_image(real.nuclei[:, None, :], real.electrons[None, :, :], real.box)
    return np.linalg.norm(d, axis=-1)


def apply_frozen_core(real: SpinRealization, r_c: float) -> SpinRealization:
    """Drop every nucleus closer than ``r_c`` (minimum image) to any electron."""
    if r_c < 0:
        raise ValueError("r_c must be non-negative")
    if r_c == 0 or real.n_electrons == 0 or real.n_nuclei == 0:
        return replace(real, meta={**real.meta, "n_removed": 0})
    dist = nucleus_electron_distances(real)
    keep = np.all(dist >= r_c, axis=1)
    return replace(
        real,
        nuclei=real.nuclei[keep],
        meta={**real.meta, "n_removed": int((~keep).sum())},
    )


def electron_polarization(B: float, T: float, const: PhysicalConstants = CONSTANTS) -> float:
    """Thermal spin-1/2 polarization tanh(hbar gamma_e B / 2 k_B T)."""
    return math.tanh(const.hbar * const.gamma_e * B / (2 * const.k_B * T))


def frozen_core_radius(a: float, B: float, T: float, const: PhysicalConstants = CONSTANTS) -> float:
    """Spin-diffusion barrier radius ``a (P_e gamma_e / gamma_C)**(1/4)`` in units of ``a``."""
    if a <= 0 or B <= 0 or T <= 0:
        raise ValueError("a, B and T must be positive")
    return frozen_core_radius_from_polarization(a, electron_polarization(B, T, const), const)


def frozen_core_radius_from_polarization(a: float, P_e: float, const: PhysicalConstants = CONSTANTS) -> float:
    if not 0.0 <= P_e <= 1.0:
        raise ValueError("P_e must lie in [0, 1]")
    return a * (P_e * const.gamma_ratio) ** 0.25


def make_realization(
    box: BoxGeometry,
    conc: Concentrations,
    seed: int,
    r_c: float = 0.0,
    sites: np.ndarray | None = None,
) -> SpinRealization:
    """Convenience pipeline: sites -> populate -> frozen core."""
    if sites is None:
        sites = cached_sites(box)
    real = populate(sites, conc, box, seed)
    n_before = real.n_nuclei
    real = apply_frozen_core(real, r_c)
    real.meta["n_nuclei_before_core"] = n_before
    return real
