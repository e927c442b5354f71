"""Hopping-plus-relaxation generator and ensemble-averaged decay curves.

Per realization the polarization vector obeys ``dp/dt = (W + diag(R)) p`` with

* ``W_ij = kappa^2 d_ij^2 T2`` for ``i != j`` and ``W_ii = -sum_j W_ij``,
* ``R_i = -eta * J_env_i(omega_eff)``.

``M = W + diag(R)`` is real symmetric and negative semidefinite, so it is
propagated through a dense symmetric eigendecomposition.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
import json
import math
import warnings

import numpy as np

from .bath import LaserMap, LorentzianBath, j_env
from .dipolar import CouplingTable, build_coupling_table
from .floquet import FloquetParams, PulseSequence, compute_floquet, find_kappa_zero
from .lattice import (
    BoxGeometry,
    Concentrations,
    SpinRealization,
    apply_frozen_core,
    cached_sites,
    make_realization,
    populate,
)

DEFAULT_TIMES = np.logspace(-2, np.log10(600.0), 400)
# |kappa| below this is treated as an exact hopping freeze (kappa^2 < 1e-18)
KAPPA_FREEZE = 1e-9

# Shared rectangular-pulse timing: 90 degree pulses of 38 us with 40 us delays.
PULSE_90 = 38e-6
DELAY = 40e-6


@dataclass(frozen=True)
class RegimeSpec:
    label: str
    sequence: PulseSequence
    eta: float
    powers: tuple = (0.0,)
    nominal_detuning: float = 0.0  # Hz, the label value

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@lru_cache(maxsize=None)
def _regime_two_detuning() -> float:
    base = PulseSequence(90.0, PULSE_90, DELAY, 0.0)
    return find_kappa_zero(base, 1500.0, 3500.0)


def regime_spec(label: str) -> RegimeSpec:
    """Sequence and eta of the three drive regimes.

    Regime III keeps the RF amplitude of the 90 degree pulse, so its 5 degree
    pulse is 5/90 as long. Regime II sits at the numerically located zero of
    kappa; its nominal label is 2.25 kHz.
    """
    label = str(label).upper()
    if label == "I":
        return RegimeSpec("I", PulseSequence(90.0, PULSE_90, DELAY, 0.0), 1.5e-3)
    if label == "II":
        seq = PulseSequence(90.0, PULSE_90, DELAY, _regime_two_detuning())
        return RegimeSpec("II", seq, 2.0e-3, nominal_detuning=2250.0)
    if label == "III":
        seq = PulseSequence(5.0, PULSE_90 * 5.0 / 90.0, DELAY, 5000.0)
        return RegimeSpec("III", seq, 3.4e-5, nominal_detuning=5000.0)
    raise ValueError(f"unknown regime {label!r}; expected I, II or III")


@lru_cache(maxsize=64)
def _floquet_cached(seq: PulseSequence, K: int) -> FloquetParams:
    return compute_floquet(seq, K=K)


@dataclass(frozen=True)
class SimConfig:
    """Everything that defines one ensemble run."""

    box_cells: int = 25
    c_nuc: float = 0.011
    c_el_ppm: float = 30.0
    r_c: float = 16.0  # Angstrom
    regime: str = "I"
    eta: float | None = None  # None: regime default
    power: float = 0.0  # W
    tau_c0: float = 7.566e-5  # s, zero-power correlation time; see scans.calibrate_tau_c0
    P_half: float = 7.5  # W, power that halves tau_c
    tau_c: float | None = None  # s, overrides the laser map
    T2: float | None = None  # s, overrides the laser map
    B_axis: tuple = (0.0, 0.0, 1.0)
    K: int = 50
    with_W: bool = True
    with_R: bool = True
    electrons: str = "random"  # "random" (binomial), "octant" or "fixed" (n_fixed random sites)
    n_fixed: int = 8

    def __post_init__(self):
        errors = []
        if self.box_cells < 2:
            errors.append("box_cells: must be >= 2")
        if not 0 <= self.c_nuc <= 1:
            errors.append("c_nuc: must lie in [0, 1]")
        if not 0 <= self.c_el_ppm <= 1e6:
            errors.append("c_el_ppm: must lie in [0, 1e6]")
        if self.r_c < 0:
            errors.append("r_c: must be >= 0")
        if self.eta is not None and self.eta <= 0:
            errors.append("eta: must be > 0")
        if self.tau_c is not None and self.tau_c <= 0:
            errors.append("tau_c: must be > 0")
        if self.tau_c0 <= 0:
            errors.append("tau_c0: must be > 0")
        if self.T2 is not None and self.T2 <= 0:
            errors.append("T2: must be > 0")
        if self.power < 0:
            errors.append("power: must be >= 0")
        if self.electrons not in ("random", "octant", "fixed"):
            errors.append("electrons: must be 'random', 'octant' or 'fixed'")
        if self.n_fixed < 0:
            errors.append("n_fixed: must be >= 0")
        if errors:
            raise ValueError("; ".join(errors))

    @property
    def box(self) -> BoxGeometry:
        return BoxGeometry.from_cells(self.box_cells)

    @property
    def concentrations(self) -> Concentrations:
        return Concentrations.from_ppm(self.c_nuc, self.c_el_ppm)

    @property
    def regime_spec(self) -> RegimeSpec:
        return regime_spec(self.regime)

    @property
    def laser_map(self) -> LaserMap:
        return LaserMap.anchored(self.tau_c0, self.P_half)

    @property
    def eta_value(self) -> float:
        return self.regime_spec.eta if self.eta is None else self.eta

    @property
    def tau_c_value(self) -> float:
        return self.laser_map.tau_c(self.power) if self.tau_c is None else self.tau_c

    @property
    def T2_value(self) -> float:
        return self.laser_map.T2(self.power) if self.T2 is None else self.T2

    def floquet(self) -> FloquetParams:
        return _floquet_cached(self.regime_spec.sequence, self.K)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["B_axis"] = list(self.B_axis)
        return d


# ----------------------------------------------------------------------------
# generator assembly


def build_W(table: CouplingTable, kappa: float, T2: float) -> np.ndarray:
    if T2 <= 0:
        raise ValueError("T2 must be positive")
    W = (kappa**2 * T2) * table.d**2
    np.fill_diagonal(W, 0.0)
    np.fill_diagonal(W, -W.sum(axis=1))
    return W


def build_R(table: CouplingTable, floq: FloquetParams, bath: LorentzianBath, eta: float) -> np.ndarray:
    if eta <= 0:
        raise ValueError("eta must be positive")
    return -eta * j_env(table, floq, bath)


@dataclass
class GeneratorMatrices:
    W: np.ndarray
    R: np.ndarray

    @property
    def M(self) -> np.ndarray:
        return self.W + np.diag(self.R)


def propagate(M, p0, times) -> np.ndarray:
    """Per-site trajectory ``p(t) = exp(M t) p0``, shape (len(times), N)."""
    M = np.asarray(M, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending")
    off = M - np.diag(np.diag(M))
    if not off.any():
        return np.exp(np.outer(times, np.diag(M))) * p0
    try:
        lam, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("symmetric eigensolver failed") from exc
    coef = V.T @ p0
    return (np.exp(np.outer(times, lam)) * coef) @ V.T


def total_polarization(M, p0, times) -> np.ndarray:
    """``sum_i p_i(t)`` via the spectral weights ``(v_j . p0)(v_j . 1)``."""
    M = np.asarray(M, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    times = np.asarray(times, dtype=float)
    off = M - np.diag(np.diag(M))
    if not off.any():
        return np.exp(np.outer(times, np.diag(M))) @ p0
    lam, V = np.linalg.eigh(M)
    a = (V.T @ p0) * V.sum(axis=0)
    return np.exp(np.outer(times, lam)) @ a


# ----------------------------------------------------------------------------
# realizations


def realization_seed(master_seed: int, index: int) -> int:
    """Deterministic, well-mixed seed for realization ``index``."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def octant_electrons(box: BoxGeometry) -> np.ndarray:
    """Lattice sites nearest the centers of the eight octants."""
    sites = cached_sites(box)
    L = box.side_length
    centers = np.array([[x, y, z] for x in (0.25, 0.75) for y in (0.25, 0.75) for z in (0.25, 0.75)]) * L
    idx = [int(np.argmin(np.linalg.norm(sites - c, axis=1))) for c in centers]
    return sites[idx]


def build_realization(cfg: SimConfig, seed: int) -> SpinRealization:
    """Populate, place electrons and apply the frozen core.

    In the "octant" and "fixed" modes the nuclei are drawn from ``seed``
    alone, so both modes share nucleus placements for equal seeds; "fixed"
    places ``n_fixed`` electrons on distinct random sites from a second stream.
    """
    box = cfg.box
    sites = cached_sites(box)
    if cfg.electrons == "random":
        return make_realization(box, cfg.concentrations, seed, cfg.r_c, sites=sites)

    real = populate(sites, Concentrations(cfg.c_nuc, 0.0), box, seed)
    if cfg.electrons == "octant":
        el = octant_electrons(box)
    else:
        rng = np.random.default_rng([int(seed), 1])
        el = sites[rng.choice(len(sites), size=cfg.n_fixed, replace=False)]
    taken = np.zeros(real.n_nuclei, dtype=bool)
    for e in el:
        taken |= np.all(np.abs(real.nuclei - e) < 1e-9, axis=1)
    real = replace(real, nuclei=real.nuclei[~taken], electrons=el)
    n_before = real.n_nuclei
    real = apply_frozen_core(real, cfg.r_c)
    real.meta["n_nuclei_before_core"] = n_before
    return real


def realization_generator(cfg: SimConfig, real: SpinRealization) -> GeneratorMatrices:
    floq = cfg.floquet()
    need_W = cfg.with_W and abs(floq.kappa) > KAPPA_FREEZE
    table = build_coupling_table(real, cfg.B_axis, with_nn=need_W)
    n = real.n_nuclei
    W = build_W(table, floq.kappa, cfg.T2_value) if need_W else np.zeros((n, n))
    if cfg.with_R and real.n_electrons:
        R = build_R(table, floq, LorentzianBath(cfg.tau_c_value), cfg.eta_value)
    else:
        R = np.zeros(n)
    return GeneratorMatrices(W=W, R=R)


def realization_curve(cfg: SimConfig, seed: int, times) -> np.ndarray | None:
    """Total polarization of one realization with p0 = 1/N_C per site, or None when empty."""
    real = build_realization(cfg, seed)
    n = real.n_nuclei
    if n == 0:
        return None
    times = np.asarray(times, dtype=float)
    if real.n_electrons == 0 or not cfg.with_R:
        return np.ones(len(times))  # pure hopping conserves the total
    gm = realization_generator(cfg, real)
    if not gm.W.any():
        return np.exp(np.outer(times, gm.R)).mean(axis=1)
    return total_polarization(gm.M, np.full(n, 1.0 / n), times)


# ----------------------------------------------------------------------------
# ensembles


@dataclass
class DecayCurve:
    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_configs: int
    regime: str = "I"
    n_skipped: int = 0
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        write_csv(path, ["t_s", "P_mean", "P_stderr"], np.column_stack([self.times, self.values, self.stderr]))

    @classmethod
    def from_csv(cls, path, regime: str = "I") -> "DecayCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(times=data[:, 0], values=data[:, 1], stderr=data[:, 2], n_configs=0, regime=regime)


def fmt9(x) -> str:
    return f"{float(x):.9g}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt9(v) if isinstance(v, (float, np.floating, int, np.integer)) else str(v) for v in row) + "\n")


def _worker(args):
    cfg, seed, times = args
    return realization_curve(cfg, seed, times)


def map_ordered(fn, jobs, workers: int = 1):
    """Map preserving job order; results are identical for any worker count."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def ensemble_curves(cfg: SimConfig, n_configs: int, seed: int, times=None, workers: int = 1):
    """Per-realization curves, stacked in index order; rows of skipped realizations dropped."""
    if n_configs < 1:
        raise ValueError("n_configs must be >= 1")
    times = DEFAULT_TIMES if times is None else np.asarray(times, dtype=float)
    jobs = [(cfg, realization_seed(seed, i), times) for i in range(n_configs)]
    out = map_ordered(_worker, jobs, workers)
    kept = [c for c in out if c is not None]
    return (np.array(kept) if kept else np.zeros((0, len(times)))), n_configs - len(kept)


def summarize(curves: np.ndarray, times, n_skipped: int = 0, regime: str = "I", meta=None) -> DecayCurve:
    if len(curves) == 0:
        raise ValueError("every realization was empty")
    mean = np.sum(curves, axis=0) / len(curves)
    sd = np.std(curves, axis=0, ddof=1) if len(curves) > 1 else np.zeros(len(times))
    norm = mean[0]
    return DecayCurve(
        times=np.asarray(times, dtype=float),
        values=mean / norm,
        stderr=sd / math.sqrt(len(curves)) / norm,
        n_configs=len(curves),
        regime=regime,
        n_skipped=n_skipped,
        meta=dict(meta or {}),
    )


def ensemble_decay(cfg: SimConfig, n_configs: int, seed: int, times=None, workers: int = 1) -> DecayCurve:
    """Configuration-averaged total polarization, normalized to 1 at ``times[0]``."""
    times = DEFAULT_TIMES if times is None else np.asarray(times, dtype=float)
    curves, skipped = ensemble_curves(cfg, n_configs, seed, times, workers)
    if skipped:
        warnings.warn(f"{skipped} of {n_configs} realizations had no nuclei and were skipped")
    return summarize(curves, times, skipped, cfg.regime, {"config": cfg.to_dict(), "seed": seed})


def run_manifest(command: str, cfg: SimConfig | dict, seed: int, outputs, extra=None) -> dict:
    from . import __version__

    conf = cfg.to_dict() if isinstance(cfg, SimConfig) else dict(cfg)
    return {
        "command": command,
        "config": conf,
        "seed": seed,
        "version": __version__,
        "numpy": np.__version__,
        "outputs": list(outputs),
        **(extra or {}),
    }


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
