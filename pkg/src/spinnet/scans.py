"""Composite experiments built on the engine: presets, laser scans, concentration maps.

Every scan is a list of independent jobs with deterministic seeds. When a
checkpoint directory is given, each finished job is stored as JSON under a
digest of its inputs, so an interrupted scan resumes where it stopped.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import math
from pathlib import Path
import warnings

import numpy as np
from scipy.optimize import minimize_scalar

from .bath import LorentzianBath, filter_weight
from .engine import (
    DEFAULT_TIMES,
    RegimeSpec,
    SimConfig,
    ensemble_curves,
    map_ordered,
    realization_curve,
    realization_seed,
    regime_spec,
    summarize,
    _floquet_cached,
)
from .fitkit import fit_emergent
from .lattice import BoxGeometry

LANDSCAPE_TIMES = np.logspace(-6, np.log10(600.0), 400)
LANDSCAPE_BOX_CELLS = 16
SLICE_BOX_CELLS = 22  # 78.5 Angstrom side
ORDERED_BOX_CELLS = 32  # 8 electrons at 30 ppm on average
FIT_FLOOR = 1e-4  # landscape fits use points with P >= FIT_FLOOR
LANDSCAPE_MIN_POINTS = 20
C_NUC_RANGE = (0.002, 0.2)
C_EL_PPM_RANGE = (2.0, 3000.0)


# ----------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class RegimePreset:
    spec: RegimeSpec
    fit_fix: str | None  # parameter held at zero when fitting this regime
    suppressed: str  # channel the sequence is designed to remove
    kappa: float

    @property
    def label(self) -> str:
        return self.spec.label


def regime_preset(label: str) -> RegimePreset:
    spec = regime_spec(label)
    kappa = _floquet_cached(spec.sequence, 50).kappa
    if spec.label == "I":
        return RegimePreset(spec, None, "none", kappa)
    if spec.label == "II":
        return RegimePreset(spec, "R_d", "hopping (kappa ~ 0)", kappa)
    return RegimePreset(spec, "R_p", "filtered electron noise", kappa)


def calibrate_tau_c0(regime: str = "I", peak_power: float = 4.0, P_half: float = 7.5, K: int = 50) -> float:
    """Zero-power correlation time placing the filter-weight maximum at ``peak_power``.

    The filtered weight sum_k |c_k|^2 J_e(omega_eff + k omega_d) is maximized
    over 1/tau_c; with 1/tau_c(P) = (1 + P / P_half) / tau_c0 the peak then
    falls at ``peak_power``.
    """
    floq = _floquet_cached(regime_spec(regime).sequence, K)

    def neg(log_x):
        return -filter_weight(floq, LorentzianBath(math.exp(-log_x)))

    x0 = math.log(abs(floq.omega_eff))
    res = minimize_scalar(neg, bounds=(x0 - 3, x0 + 3), method="bounded", options={"xatol": 1e-10})
    inv_peak = math.exp(res.x)
    return (1.0 + peak_power / P_half) / inv_peak


# ----------------------------------------------------------------------------
# checkpointing


def job_key(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()[:20]


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not serializable: {type(x)}")


class Checkpoint:
    """Directory of finished job results keyed by input digest; a no-op when ``path`` is None."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.mkdir(parents=True, exist_ok=True)

    def get(self, key: str):
        if self.path is None:
            return None
        f = self.path / f"{key}.json"
        if not f.exists():
            return None
        return json.loads(f.read_text(encoding="utf-8"))

    def put(self, key: str, value: dict) -> None:
        if self.path is None:
            return
        tmp = self.path / f"{key}.json.tmp"
        tmp.write_text(json.dumps(value, sort_keys=True, default=_jsonable), encoding="utf-8")
        tmp.replace(self.path / f"{key}.json")


def _cached(ckpt: Checkpoint, payload: dict, fn):
    key = job_key(payload)
    hit = ckpt.get(key)
    if hit is not None:
        return hit
    value = fn()
    ckpt.put(key, value)
    return value


# ----------------------------------------------------------------------------
# laser scans


@dataclass
class LaserScanResult:
    regime: str
    powers: np.ndarray
    inv_tau_c: np.ndarray
    T2: np.ndarray
    R_p: np.ndarray
    R_p_err: np.ndarray
    R_d: np.ndarray
    R_d_err: np.ndarray
    fit_fix: str | None
    n_configs: int

    def rows(self):
        return np.column_stack([self.powers, self.inv_tau_c, self.T2, self.R_p, self.R_p_err, self.R_d, self.R_d_err])

    header = ("power_W", "inv_tau_c_per_s", "T2_s", "R_p", "R_p_err", "R_d", "R_d_err")

    def pearson(self, which: str = "R_p") -> float:
        y = getattr(self, which)
        if np.ptp(y) == 0 or np.ptp(self.powers) == 0:
            return float("nan")
        return float(np.corrcoef(self.powers, y)[0, 1])


def _batch_errors(curves, times, n_batches, window, fix, gamma):
    """Standard error of the fitted rates over disjoint batches of realizations."""
    if n_batches < 2 or len(curves) < 2 * n_batches:
        return float("nan"), float("nan")
    rp, rd = [], []
    for chunk in np.array_split(curves, n_batches):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fr = fit_emergent(times, summarize(chunk, times).values, window=window, gamma=gamma, fix=fix)
        except ValueError:
            continue
        rp.append(fr.R_p)
        rd.append(fr.R_d)
    if len(rp) < 2:
        return float("nan"), float("nan")
    k = math.sqrt(len(rp))
    return float(np.std(rp, ddof=1) / k), float(np.std(rd, ddof=1) / k)


def _fit_job(cfg: SimConfig, n_configs, seed, times, window, fix, gamma, n_batches, workers):
    curves, skipped = ensemble_curves(cfg, n_configs, seed, times, workers)
    dc = summarize(curves, times, skipped, cfg.regime)
    fr = fit_emergent(dc, window=window, gamma=gamma, fix=fix)
    rp_err, rd_err = _batch_errors(curves, times, n_batches, window, fix, gamma)
    return {
        "R_p": fr.R_p, "R_d": fr.R_d, "R_p_err": rp_err, "R_d_err": rd_err,
        "rrms": fr.rrms, "n_used": len(curves), "values": dc.values,
    }


def laser_scan(
    regime: str,
    powers,
    n_configs: int,
    seed: int = 0,
    base: SimConfig | None = None,
    times=None,
    window=None,
    gamma: float = 0.5,
    n_batches: int = 5,
    workers: int = 1,
    checkpoint=None,
) -> LaserScanResult:
    """Fitted rates against laser power with identical realizations at every power."""
    powers = np.asarray(powers, dtype=float)
    if np.any(np.diff(powers) <= 0):
        raise ValueError("powers must be strictly ascending")
    preset = regime_preset(regime)
    base = replace(base or SimConfig(), regime=preset.label)
    times = DEFAULT_TIMES if times is None else np.asarray(times, dtype=float)
    ckpt = Checkpoint(checkpoint)
    out = []
    for P in powers:
        cfg = replace(base, power=float(P))
        payload = {"kind": "laser", "cfg": cfg.to_dict(), "n": n_configs, "seed": seed,
                   "times": times, "window": window, "gamma": gamma, "batches": n_batches}
        out.append(_cached(ckpt, payload, lambda cfg=cfg: _fit_job(
            cfg, n_configs, seed, times, window, preset.fit_fix, gamma, n_batches, workers)))
    return LaserScanResult(
        regime=preset.label,
        powers=powers,
        inv_tau_c=np.array([1.0 / replace(base, power=float(P)).tau_c_value for P in powers]),
        T2=np.array([replace(base, power=float(P)).T2_value for P in powers]),
        R_p=np.array([o["R_p"] for o in out]),
        R_p_err=np.array([o["R_p_err"] for o in out]),
        R_d=np.array([o["R_d"] for o in out]),
        R_d_err=np.array([o["R_d_err"] for o in out]),
        fit_fix=preset.fit_fix,
        n_configs=n_configs,
    )


# ----------------------------------------------------------------------------
# concentration landscape


@dataclass
class LandscapeCell:
    c_nuc: float
    c_el_ppm: float
    R_p: float
    R_d: float
    ratio_log10: float  # nan unless both rates are positive
    tag: str  # intermediate, diffusion-limited, diffusion-dominated, static or invalid
    n_configs: int
    r_c: float = float("nan")
    rrms_two: float = float("nan")
    rrms_stretched: float = float("nan")
    rrms_mono: float = float("nan")
    t_1e: float = float("nan")
    P_end: float = float("nan")
    meta: dict = field(default_factory=dict)

    header = ("c_nuc", "c_el_ppm", "Rp", "Rd", "log10_ratio", "tag")

    def row(self):
        return (self.c_nuc, self.c_el_ppm, self.R_p, self.R_d, self.ratio_log10, self.tag)


def capped_core_radius(r_c: float, c_el: float, lattice_constant: float = BoxGeometry.from_cells(1).lattice_constant) -> float:
    """min(r_c, r_ws / 2) with r_ws the Wigner-Seitz radius of the electron density.

    Keeps neighbouring frozen cores from swallowing the whole sample at high
    electron concentration.
    """
    if c_el <= 0:
        return r_c
    n_e = 8.0 * c_el / lattice_constant**3
    r_ws = (3.0 / (4.0 * math.pi * n_e)) ** (1.0 / 3.0)
    return min(r_c, 0.5 * r_ws)


def one_over_e_time(times, values) -> float:
    """First crossing of 1/e, log-interpolated in time; inf when never reached."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    target = math.exp(-1)
    below = np.nonzero(values <= target)[0]
    if len(below) == 0:
        return float("inf")
    j = below[0]
    if j == 0:
        return float(times[0])
    t0, t1 = math.log(times[j - 1]), math.log(times[j])
    v0, v1 = values[j - 1], values[j]
    frac = (v0 - target) / (v0 - v1) if v0 != v1 else 0.0
    return float(math.exp(t0 + frac * (t1 - t0)))


def classify_fit(times, values, floor: float = FIT_FLOOR, min_points: int = LANDSCAPE_MIN_POINTS, gamma: float = 0.5):
    """Two-parameter, pure stretched and pure mono fits over the window where P >= floor.

    Returns (two, stretched, mono, tag).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values >= floor
    last = np.nonzero(~keep)[0]
    stop = last[0] if len(last) else len(values)
    window = (times[0], times[max(stop - 1, 0)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        two = fit_emergent(times, values, window=window, gamma=gamma, min_points=min_points)
        st = fit_emergent(times, values, window=window, gamma=gamma, fix="R_d", min_points=min_points)
        mo = fit_emergent(times, values, window=window, gamma=gamma, fix="R_p", min_points=min_points)
    if two.R_p == 0 and two.R_d == 0:
        tag = "static"
    elif two.R_d == 0:
        tag = "diffusion-limited"
    elif two.R_p == 0:
        tag = "diffusion-dominated"
    else:
        tag = "intermediate"
    return two, st, mo, tag


def _landscape_cell(cfg: SimConfig, n_configs, seed, times, workers) -> dict:
    curves, skipped = ensemble_curves(cfg, n_configs, seed, times, workers)
    base = {"c_nuc": cfg.c_nuc, "c_el_ppm": cfg.c_el_ppm, "n_configs": len(curves), "r_c": cfg.r_c}
    if len(curves) == 0:
        return {**base, "R_p": float("nan"), "R_d": float("nan"), "tag": "invalid"}
    dc = summarize(curves, times, skipped)
    try:
        two, st, mo, tag = classify_fit(times, dc.values)
    except ValueError as exc:
        return {**base, "R_p": float("nan"), "R_d": float("nan"), "tag": "invalid", "error": str(exc)}
    return {
        **base, "R_p": two.R_p, "R_d": two.R_d, "tag": tag,
        "rrms_two": two.rrms, "rrms_stretched": st.rrms, "rrms_mono": mo.rrms,
        "t_1e": one_over_e_time(times, dc.values), "P_end": float(dc.values[-1]),
    }


def _cell_from(d: dict) -> LandscapeCell:
    rp, rd = d["R_p"], d["R_d"]
    ratio = math.log10(rp / rd) if (rp > 0 and rd > 0) else float("nan")
    extra = {k: d[k] for k in ("rrms_two", "rrms_stretched", "rrms_mono", "t_1e", "P_end") if k in d}
    return LandscapeCell(
        c_nuc=d["c_nuc"], c_el_ppm=d["c_el_ppm"], R_p=rp, R_d=rd, ratio_log10=ratio,
        tag=d["tag"], n_configs=d["n_configs"], r_c=d["r_c"], **extra,
    )


def cell_config(c_nuc: float, c_el_ppm: float, box_cells: int, base: SimConfig | None = None) -> SimConfig:
    base = base or SimConfig()
    r_c = capped_core_radius(base.r_c, c_el_ppm * 1e-6)
    return replace(base, c_nuc=float(c_nuc), c_el_ppm=float(c_el_ppm), box_cells=box_cells, r_c=r_c)


def landscape_cell(c_nuc, c_el_ppm, n_configs, seed=0, box_cells=LANDSCAPE_BOX_CELLS, base=None,
                   times=None, workers=1, checkpoint=None) -> LandscapeCell:
    times = LANDSCAPE_TIMES if times is None else np.asarray(times, dtype=float)
    cfg = cell_config(c_nuc, c_el_ppm, box_cells, base)
    payload = {"kind": "cell", "cfg": cfg.to_dict(), "n": n_configs, "seed": seed, "times": times}
    d = _cached(Checkpoint(checkpoint), payload, lambda: _landscape_cell(cfg, n_configs, seed, times, workers))
    return _cell_from(d)


def landscape(c_nucs, c_els_ppm, n_configs: int, seed: int = 0, box_cells: int = LANDSCAPE_BOX_CELLS,
              base: SimConfig | None = None, times=None, workers: int = 1, checkpoint=None):
    """Matrix of cells, rows over ``c_nucs`` and columns over ``c_els_ppm``, in a fixed box."""
    c_nucs = np.asarray(c_nucs, dtype=float)
    c_els_ppm = np.asarray(c_els_ppm, dtype=float)
    errors = []
    if np.any((c_nucs < C_NUC_RANGE[0]) | (c_nucs > C_NUC_RANGE[1])):
        errors.append(f"c_nuc values must lie in {C_NUC_RANGE}")
    if np.any((c_els_ppm < C_EL_PPM_RANGE[0]) | (c_els_ppm > C_EL_PPM_RANGE[1])):
        errors.append(f"c_el_ppm values must lie in {C_EL_PPM_RANGE}")
    if errors:
        raise ValueError("; ".join(errors))
    return [
        [landscape_cell(cn, ce, n_configs, realization_seed(seed, 1000 * i + j), box_cells, base, times,
                        workers, checkpoint) for j, ce in enumerate(c_els_ppm)]
        for i, cn in enumerate(c_nucs)
    ]


def concentration_slice(c_nucs, n_configs: int, c_el_ppm: float = 30.0, seed: int = 0,
                        box_cells: int = SLICE_BOX_CELLS, base=None, times=None, workers=1, checkpoint=None):
    """Cells at fixed electron concentration; the same master seed at every c_nuc."""
    return [landscape_cell(float(c), c_el_ppm, n_configs, seed, box_cells, base, times, workers, checkpoint)
            for c in c_nucs]


# ----------------------------------------------------------------------------
# ordered versus random electrons


@dataclass
class PairedCurves:
    times: np.ndarray
    ordered: np.ndarray  # (n_pairs, n_times), per-realization totals
    random: np.ndarray
    seeds: list

    def t_1e(self):
        return (np.array([one_over_e_time(self.times, c) for c in self.ordered]),
                np.array([one_over_e_time(self.times, c) for c in self.random]))

    def random_slower_fraction(self) -> float:
        to, tr = self.t_1e()
        return float(np.mean(tr > to))

    def means(self):
        return summarize(self.ordered, self.times), summarize(self.random, self.times)


def _pair_job(args):
    cfg, seed, times = args
    o = realization_curve(replace(cfg, electrons="octant"), seed, times)
    r = realization_curve(replace(cfg, electrons="fixed", n_fixed=8), seed, times)
    return o, r


def ordered_vs_random(n_pairs: int, seed: int = 0, base: SimConfig | None = None, times=None,
                      box_cells: int = ORDERED_BOX_CELLS, workers: int = 1) -> PairedCurves:
    """Octant-ordered and randomly placed electrons (8 each) over shared nucleus placements."""
    times = DEFAULT_TIMES if times is None else np.asarray(times, dtype=float)
    cfg = replace(base or SimConfig(), box_cells=box_cells)
    seeds = [realization_seed(seed, i) for i in range(n_pairs)]
    res = map_ordered(_pair_job, [(cfg, s, times) for s in seeds], workers)
    kept = [(o, r, s) for (o, r), s in zip(res, seeds) if o is not None and r is not None]
    return PairedCurves(
        times=times,
        ordered=np.array([k[0] for k in kept]).reshape(-1, len(times)),
        random=np.array([k[1] for k in kept]).reshape(-1, len(times)),
        seeds=[k[2] for k in kept],
    )


# ----------------------------------------------------------------------------
# extended correlation-rate axis


@dataclass
class DecouplingResult:
    inv_tau_c: np.ndarray
    R_p: np.ndarray
    R_d: np.ndarray
    argmax: float
    interior_max: bool
    decreasing_after_peak: bool

    @property
    def verdict(self) -> bool:
        return self.interior_max and self.decreasing_after_peak


def optical_decoupling_extrapolation(inv_tau_c, n_configs: int, seed: int = 0, base: SimConfig | None = None,
                                     times=None, window=None, workers: int = 1, checkpoint=None,
                                     min_extent: float = 10.0) -> DecouplingResult:
    """Regime I rates against 1/tau_c with T2 held at the base configuration's value."""
    inv = np.asarray(inv_tau_c, dtype=float)
    if np.any(np.diff(inv) <= 0) or np.any(inv <= 0):
        raise ValueError("inv_tau_c must be positive and ascending")
    base = replace(base or SimConfig(), regime="I")
    lm = base.laser_map
    exp_max = float(lm.inv_tau_c_at(lm.P_max))
    if inv[-1] < min_extent * exp_max:
        raise ValueError(f"grid must extend to >= {min_extent}x the experimental 1/tau_c ({exp_max:.4g} s^-1)")
    T2 = base.T2_value
    times = DEFAULT_TIMES if times is None else np.asarray(times, dtype=float)
    ckpt = Checkpoint(checkpoint)
    rp, rd = [], []
    for x in inv:
        cfg = replace(base, tau_c=1.0 / float(x), T2=T2)
        payload = {"kind": "decouple", "cfg": cfg.to_dict(), "n": n_configs, "seed": seed,
                   "times": times, "window": window}
        d = _cached(ckpt, payload, lambda cfg=cfg: _fit_job(cfg, n_configs, seed, times, window, None, 0.5, 0, workers))
        rp.append(d["R_p"])
        rd.append(d["R_d"])
    rp = np.array(rp)
    k = int(np.argmax(rp))
    return DecouplingResult(
        inv_tau_c=inv, R_p=rp, R_d=np.array(rd), argmax=float(inv[k]),
        interior_max=0 < k < len(inv) - 1,
        decreasing_after_peak=bool(np.all(np.diff(rp[k:]) < 0)),
    )


def as_dict(obj) -> dict:
    d = asdict(obj)
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}
