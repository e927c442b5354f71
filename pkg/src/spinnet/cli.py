"""Command-line front end.

Every subcommand reads an optional JSON config, applies flag overrides,
validates the result, runs one pipeline and writes CSV/JSON files plus a
``manifest.json`` into ``--out-dir``.

    spinnet decay --regime I --configs 100 --seed 7 --out-dir runs/decay
    spinnet gamma-sweep --input runs/decay/decay.csv --out-dir runs/decay
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
from pathlib import Path
import sys
import time
import warnings
from dataclasses import replace

import numpy as np

from . import __version__
from .constants import DIAMOND_LATTICE_CONSTANT, PPM

log = logging.getLogger("spinnet")

DEFAULTS = {
    "sim": {
        "box_cells": 25, "c_nuc": 0.011, "c_el_ppm": 30.0, "r_c": 16.0, "regime": "I", "eta": None,
        "power": 0.0, "tau_c0": 7.566e-5, "P_half": 7.5, "tau_c": None, "T2": None,
        "B_axis": [0.0, 0.0, 1.0], "K": 50, "electrons": "random", "n_fixed": 8,
    },
    "run": {"seed": 0, "configs": 100, "workers": None, "t_min": 0.01, "t_max": 600.0, "n_times": 400},
    "fit": {"gamma": 0.5, "t_min": None, "t_max": None},
    "sequence": {
        "flip_angle_deg": 90.0, "pulse_duration_s": 38e-6, "interpulse_delay_s": 40e-6,
        "detuning_hz_min": 0.0, "detuning_hz_max": 5000.0, "n_detunings": 101,
    },
    "transport": {"kappa": -0.5, "T2": 2.5e-5, "threshold": 1e-3, "sizes": [12, 16, 20, 24, 28], "n_runs": 5},
    "scan": {
        "powers": [0.0, 1.5, 3.0, 4.5, 6.0, 7.5],
        "c_nuc_list": [0.002, 0.004, 0.011, 0.03, 0.1],
        "c_el_ppm_list": [2.0, 10.0, 30.0, 300.0, 3000.0],
        "inv_tau_c_min": 1e3, "inv_tau_c_max": 1e6, "n_inv_tau_c": 13,
        "landscape_box_cells": 16, "slice_box_cells": 22, "ordered_box_cells": 32,
    },
    "oracle": {"A": 1.0, "density": 0.01, "n_samples": 4000, "powers": [6.0, 4.0]},
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _merge(base: dict, doc: dict, errors: list, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if key not in base:
            errors.append(f"{path}: unknown key")
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                errors.append(f"{path}: expected a table")
            else:
                out[key] = _merge(base[key], value, errors, path + ".")
        else:
            out[key] = value
    return out


def _check(cfg: dict, errors: list, warn: list) -> None:
    sim, run, seq, tr, sc = cfg["sim"], cfg["run"], cfg["sequence"], cfg["transport"], cfg["scan"]

    def need(cond, msg):
        if not cond:
            errors.append(msg)

    def num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)

    for sect, key, lo in (
        ("sim", "c_nuc", 0.0), ("sim", "c_el_ppm", 0.0), ("sim", "r_c", 0.0), ("sim", "power", 0.0),
        ("sim", "P_half", 1e-300), ("sim", "tau_c0", 1e-300), ("run", "t_min", 1e-300), ("run", "t_max", 1e-300),
    ):
        v = cfg[sect][key]
        need(num(v) and v >= lo, f"{sect}.{key}: must be a number >= {lo:g}")
    for key in ("eta", "tau_c", "T2"):
        v = sim[key]
        need(v is None or (num(v) and v > 0), f"sim.{key}: must be > 0 or null")
    need(isinstance(sim["box_cells"], int) and sim["box_cells"] >= 2, "sim.box_cells: must be an integer >= 2")
    need(str(sim["regime"]).upper() in ("I", "II", "III"), "sim.regime: must be I, II or III")
    need(sim["electrons"] in ("random", "octant", "fixed"), "sim.electrons: must be random, octant or fixed")
    need(num(sim["c_nuc"]) and sim["c_nuc"] <= 1, "sim.c_nuc: must lie in [0, 1]")
    need(isinstance(sim["K"], int) and sim["K"] >= 1, "sim.K: must be an integer >= 1")
    need(isinstance(sim["B_axis"], (list, tuple)) and len(sim["B_axis"]) == 3, "sim.B_axis: must have 3 components")
    need(isinstance(run["configs"], int) and run["configs"] >= 1, "run.configs: must be an integer >= 1")
    need(isinstance(run["seed"], int) and run["seed"] >= 0, "run.seed: must be a non-negative integer")
    need(run["workers"] is None or (isinstance(run["workers"], int) and run["workers"] >= 1),
         "run.workers: must be a positive integer or null")
    need(isinstance(run["n_times"], int) and run["n_times"] >= 2, "run.n_times: must be an integer >= 2")
    if num(run["t_min"]) and num(run["t_max"]):
        need(run["t_max"] > run["t_min"], "run.t_max: must exceed run.t_min")
    need(num(seq["pulse_duration_s"]) and seq["pulse_duration_s"] >= 0, "sequence.pulse_duration_s: must be >= 0")
    need(num(seq["interpulse_delay_s"]) and seq["interpulse_delay_s"] >= 0, "sequence.interpulse_delay_s: must be >= 0")
    need(num(tr["T2"]) and tr["T2"] > 0, "transport.T2: must be > 0")
    need(num(tr["threshold"]) and 0 < tr["threshold"] <= 1, "transport.threshold: must lie in (0, 1]")
    powers = np.asarray(sc["powers"], dtype=float)
    need(len(powers) >= 2 and np.all(np.diff(powers) > 0) and np.all(powers >= 0),
         "scan.powers: must be non-negative and strictly ascending")

    if isinstance(sim["box_cells"], int) and num(sim["r_c"]):
        side = sim["box_cells"] * DIAMOND_LATTICE_CONSTANT
        need(sim["r_c"] < side / 2, f"sim.r_c: must be below half the box side ({side / 2:.3g} Angstrom)")
        if num(sim["c_el_ppm"]):
            expected = 8 * sim["box_cells"] ** 3 * sim["c_el_ppm"] * PPM
            if expected < 1:
                warn.append(f"expected electrons per realization is {expected:.3g} < 1")


def validate_config(source=None, overrides: dict | None = None):
    """Merge defaults, a config (path, dict or None) and overrides; check everything at once.

    Returns (config, warnings). The config gains a ``derived`` table with
    normalized units (fractions, rad/s). Raises ConfigError listing all
    violations.
    """
    errors: list = []
    warn: list = []
    if source is None:
        doc = {}
    elif isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text(encoding="utf-8")
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{source}: invalid JSON ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["config root must be a table"])
    cfg = _merge(DEFAULTS, doc, errors)
    if overrides:
        cfg = _merge(cfg, overrides, errors)
    if not errors:
        _check(cfg, errors, warn)
    if errors:
        raise ConfigError(errors)
    cfg["sim"]["regime"] = str(cfg["sim"]["regime"]).upper()
    seq = cfg["sequence"]
    cfg["derived"] = {
        "c_el": cfg["sim"]["c_el_ppm"] * PPM,
        "box_side_angstrom": cfg["sim"]["box_cells"] * DIAMOND_LATTICE_CONSTANT,
        "expected_electrons": 8 * cfg["sim"]["box_cells"] ** 3 * cfg["sim"]["c_el_ppm"] * PPM,
        "delta_omega_min_rad_s": 2 * math.pi * seq["detuning_hz_min"],
        "delta_omega_max_rad_s": 2 * math.pi * seq["detuning_hz_max"],
    }
    return cfg, warn


def sim_config(cfg: dict):
    from .engine import SimConfig

    sim = dict(cfg["sim"])
    sim["B_axis"] = tuple(float(x) for x in sim["B_axis"])
    return SimConfig(**sim)


def time_grid(cfg: dict) -> np.ndarray:
    r = cfg["run"]
    return np.logspace(math.log10(r["t_min"]), math.log10(r["t_max"]), r["n_times"])


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


# ----------------------------------------------------------------------------
# subcommands; each returns the list of files it wrote


def cmd_decay(cfg, out: Path, workers: int, args):
    from .engine import ensemble_decay

    dc = ensemble_decay(sim_config(cfg), cfg["run"]["configs"], cfg["run"]["seed"], time_grid(cfg), workers)
    dc.to_csv(out / "decay.csv")
    return ["decay.csv"]


def _load_curve(path):
    from .engine import DecayCurve

    if path is None:
        raise ConfigError(["--input: a decay CSV is required"])
    return DecayCurve.from_csv(path)


def _fit_window(cfg):
    f = cfg["fit"]
    if f["t_min"] is None and f["t_max"] is None:
        return None
    return (f["t_min"] if f["t_min"] is not None else 0.0, f["t_max"] if f["t_max"] is not None else math.inf)


def cmd_fit(cfg, out: Path, workers: int, args):
    from .fitkit import fit_emergent

    dc = _load_curve(args.input)
    fr = fit_emergent(dc, window=_fit_window(cfg), gamma=cfg["fit"]["gamma"], fix=args.fix)
    _write_json(out / "fit.json", fr.to_dict())
    return ["fit.json"]


def cmd_gamma_sweep(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .fitkit import gamma_sweep

    dc = _load_curve(args.input)
    table, best = gamma_sweep(dc, window=_fit_window(cfg))
    write_csv(out / "gamma_sweep.csv", ["gamma", "rms"], table)
    _write_json(out / "gamma_sweep.json", {"argmin_gamma": best})
    print(f"argmin gamma = {best:.2f}")
    return ["gamma_sweep.csv", "gamma_sweep.json"]


def cmd_transport(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .transport import transport_run

    tr = cfg["transport"]
    res = transport_run(
        cfg["sim"]["c_nuc"], cfg["sim"]["box_cells"], cfg["run"]["configs"], cfg["run"]["seed"],
        kappa=tr["kappa"], T2=tr["T2"], threshold=tr["threshold"], workers=workers,
    )
    rows = np.column_stack([res.times, res.msd, res.msd_err, *res.axis_moments])
    write_csv(out / "msd.csv", ["t_s", "msd_A2", "msd_stderr", "x2", "y2", "z2"], rows)
    _write_json(out / "transport_fit.json", {
        "D_A2_per_s_alpha": res.D, "D_err": res.D_err, "alpha": res.alpha, "alpha_err": res.alpha_err,
        "t_cutoff": res.t_cutoff, "cutoff_flagged": res.cutoff_flagged, "n_configs": res.n_configs,
        "n_nuclei_mean": res.n_nuclei_mean,
    })
    print(f"alpha = {res.alpha:.3f} +- {res.alpha_err:.3f}, D = {res.D:.3g}")
    return ["msd.csv", "transport_fit.json"]


def cmd_finite_size(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .transport import finite_size_scan

    tr = cfg["transport"]
    rows = finite_size_scan(
        cfg["sim"]["c_nuc"], tr["sizes"], n_runs=tr["n_runs"], n_traj=cfg["run"]["configs"],
        seed=cfg["run"]["seed"], kappa=tr["kappa"], T2=tr["T2"], workers=workers,
    )
    write_csv(out / "finite_size.csv", ["n_sites", "n_sites_inv_cbrt", "alpha", "alpha_err", "D", "D_err"], rows)
    return ["finite_size.csv"]


def cmd_eigen(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .spectral import (
        eigenvalue_spectrum, mode_profile_2d, realization_modes, rp_dep_comparison, slowest_mode_stats,
    )

    base = sim_config(cfg)
    n, seed, times = cfg["run"]["configs"], cfg["run"]["seed"], time_grid(cfg)
    rows, rp_rows = [], []
    for ce in cfg["scan"]["c_el_ppm_list"]:
        c = replace(base, c_el_ppm=float(ce))
        lam, se, used, zero = slowest_mode_stats(c, n, seed, workers)
        rp_full, rp_dep, (f_full, _, _, _) = rp_dep_comparison(c, n, seed, times, workers=workers)
        rows.append((float(ce), lam, se, used, zero, 2 * f_full.R_d, lam / (2 * f_full.R_d) if f_full.R_d > 0 else math.nan))
        rp_rows.append((float(ce), rp_full, rp_dep, rp_full / rp_dep if rp_dep > 0 else math.nan))
    write_csv(out / "lambda0.csv", ["c_el_ppm", "lambda0_mean", "lambda0_stderr", "n_used", "n_zero", "two_R_d", "ratio"], rows)
    write_csv(out / "rp_dep.csv", ["c_el_ppm", "R_p_full", "R_p_dep", "ratio"], rp_rows)

    spec = eigenvalue_spectrum(base, cfg["scan"]["c_nuc_list"], seed)
    spec_rows = [(c, j, v) for c, lam in spec.items() for j, v in enumerate(lam)]
    write_csv(out / "spectrum.csv", ["c_nuc", "index", "lambda"], spec_rows)

    rm = realization_modes(base, seed)
    files = ["lambda0.csv", "rp_dep.csv", "spectrum.csv"]
    if rm is not None:
        real, modes = rm
        write_csv(out / "slowest_mode_xy.csv", ["x_A", "y_A", "weight"], mode_profile_2d(real, modes.vectors[:, 0]))
        files.append("slowest_mode_xy.csv")
    return files


def cmd_landscape(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .scans import LandscapeCell, landscape

    sc = cfg["scan"]
    grid = landscape(
        sc["c_nuc_list"], sc["c_el_ppm_list"], cfg["run"]["configs"], cfg["run"]["seed"],
        box_cells=sc["landscape_box_cells"], base=sim_config(cfg), workers=workers,
        checkpoint=out / "checkpoint",
    )
    write_csv(out / "landscape.csv", LandscapeCell.header, [c.row() for row in grid for c in row])
    return ["landscape.csv"]


def cmd_slice(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .scans import concentration_slice

    sc = cfg["scan"]
    cells = concentration_slice(
        sc["c_nuc_list"], cfg["run"]["configs"], cfg["sim"]["c_el_ppm"], cfg["run"]["seed"],
        box_cells=sc["slice_box_cells"], base=sim_config(cfg), workers=workers, checkpoint=out / "checkpoint",
    )
    write_csv(out / "slice.csv", ["c_nuc", "R_p", "R_d", "tag", "t_1e"], [(c.c_nuc, c.R_p, c.R_d, c.tag, c.t_1e) for c in cells])
    return ["slice.csv"]


def cmd_laser(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .scans import LaserScanResult, laser_scan, optical_decoupling_extrapolation

    sc = cfg["scan"]
    base = sim_config(cfg)
    res = laser_scan(base.regime, sc["powers"], cfg["run"]["configs"], cfg["run"]["seed"], base=base,
                     times=time_grid(cfg), workers=workers, checkpoint=out / "checkpoint")
    name = f"laser_{res.regime}.csv"
    write_csv(out / name, LaserScanResult.header, res.rows())
    files = [name]
    if args.extended:
        inv = np.logspace(math.log10(sc["inv_tau_c_min"]), math.log10(sc["inv_tau_c_max"]), sc["n_inv_tau_c"])
        dec = optical_decoupling_extrapolation(inv, cfg["run"]["configs"], cfg["run"]["seed"], base=base,
                                               times=time_grid(cfg), workers=workers, checkpoint=out / "checkpoint")
        write_csv(out / "decoupling.csv", ["inv_tau_c", "R_p", "R_d"], np.column_stack([dec.inv_tau_c, dec.R_p, dec.R_d]))
        _write_json(out / "decoupling.json", {"argmax_inv_tau_c": dec.argmax, "interior_max": dec.interior_max,
                                              "decreasing_after_peak": dec.decreasing_after_peak})
        files += ["decoupling.csv", "decoupling.json"]
    return files


def cmd_ordered(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .scans import ordered_vs_random

    pc = ordered_vs_random(cfg["run"]["configs"], cfg["run"]["seed"], base=sim_config(cfg), times=time_grid(cfg),
                           box_cells=cfg["scan"]["ordered_box_cells"], workers=workers)
    o, r = pc.means()
    write_csv(out / "ordered_random.csv", ["t_s", "P_ordered", "P_ordered_stderr", "P_random", "P_random_stderr"],
              np.column_stack([pc.times, o.values, o.stderr, r.values, r.stderr]))
    to, tr = pc.t_1e()
    write_csv(out / "pairs_t1e.csv", ["seed", "t_1e_ordered", "t_1e_random"], list(zip(pc.seeds, to, tr)))
    print(f"random slower in {100 * pc.random_slower_fraction():.0f}% of pairs")
    return ["ordered_random.csv", "pairs_t1e.csv"]


def cmd_kappa(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .floquet import PulseSequence, compute_floquet, filter_function, kappa_scan

    s = cfg["sequence"]
    base = PulseSequence(s["flip_angle_deg"], s["pulse_duration_s"], s["interpulse_delay_s"], 0.0)
    det = np.linspace(s["detuning_hz_min"], s["detuning_hz_max"], s["n_detunings"])
    rows = kappa_scan(base, det, K=cfg["sim"]["K"])
    write_csv(out / "kappa_scan.csv", ["detuning_hz", "kappa", "omega_eff", "theta_eff", "sum_ck2"], rows)
    floq = compute_floquet(sim_config(cfg).regime_spec.sequence, K=cfg["sim"]["K"])
    write_csv(out / "filter_comb.csv", ["omega_rad_s", "weight"], filter_function(floq.c_k[1], floq.omega_d))
    return ["kappa_scan.csv", "filter_comb.csv"]


def cmd_bath(cfg, out: Path, workers: int, args):
    from .bath import PumpModel, correlation_function, fit_correlation_time, lindblad_generator, tau_c_of_power
    from .engine import write_csv

    gps = np.linspace(0.0, 10.0, 11)
    lm = tau_c_of_power(gps)
    write_csv(out / "pump_map.csv", ["Gamma_p", "inv_tau_c"], np.column_stack([lm.gamma_p, lm.inv_tau_c]))
    gen = lindblad_generator(PumpModel(Gamma_p=1.0))
    tc, r2 = fit_correlation_time(gen)
    taus = np.linspace(0.0, 5 * tc, 101)
    write_csv(out / "correlation.csv", ["tau_s", "C"], np.column_stack([taus, correlation_function(gen, taus)]))
    _write_json(out / "pump_map.json", {"slope": lm.slope, "intercept": lm.intercept, "r_squared": lm.r_squared,
                                        "tau_c_at_Gamma_p_1": tc, "single_exp_r_squared": r2})
    return ["pump_map.csv", "correlation.csv", "pump_map.json"]


def cmd_oracle(cfg, out: Path, workers: int, args):
    from .engine import write_csv
    from .fitkit import poisson_stretched_oracle, poisson_survival_exact

    o = cfg["oracle"]
    times = np.logspace(-4, 6, 200)
    files, summary = [], {}
    for p in o["powers"]:
        surv, expo, R = poisson_stretched_oracle(o["A"], o["density"], o["n_samples"], times, p, cfg["run"]["seed"])
        exact = poisson_survival_exact(o["A"], o["density"], times, p)
        name = f"oracle_p{p:g}.csv"
        write_csv(out / name, ["t", "S_mc", "S_exact"], np.column_stack([times, surv, exact]))
        files.append(name)
        summary[f"{p:g}"] = {"exponent": expo, "expected": 3.0 / p, "ball_radius": R}
    _write_json(out / "oracle.json", summary)
    return files + ["oracle.json"]


COMMANDS = {
    "decay": (cmd_decay, "ensemble-averaged decay curve"),
    "fit": (cmd_fit, "two-rate fit of a decay CSV"),
    "gamma-sweep": (cmd_gamma_sweep, "fit residual against the stretch exponent"),
    "transport": (cmd_transport, "single-site spreading and MSD fit"),
    "finite-size": (cmd_finite_size, "transport fit across box sizes"),
    "eigen": (cmd_eigen, "slowest modes, R_p with and without hopping, spectra"),
    "landscape": (cmd_landscape, "rates over a concentration grid"),
    "slice": (cmd_slice, "rates against 13C concentration at fixed electron density"),
    "laser": (cmd_laser, "rates against laser power"),
    "ordered": (cmd_ordered, "octant-ordered against random electrons"),
    "kappa": (cmd_kappa, "dipolar scaling factor over a detuning sweep"),
    "bath": (cmd_bath, "pump model correlation time against pump strength"),
    "oracle": (cmd_oracle, "diffusionless trapping survival check"),
}


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return str(x)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--configs", type=int, help="realizations per ensemble")
    common.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--out-dir", default=os.environ.get("SPINNET_OUT_DIR", "."))
    common.add_argument("--regime", choices=["I", "II", "III"])
    common.add_argument("--cnuc", type=float, help="13C fraction")
    common.add_argument("--cel-ppm", type=float, help="electron concentration in ppm")
    common.add_argument("--power", type=float, help="laser power in W")
    common.add_argument("--box-cells", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spinnet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text)
        if name in ("fit", "gamma-sweep"):
            sp.add_argument("--input", help="decay CSV")
        if name == "fit":
            sp.add_argument("--fix", choices=["R_p", "R_d"])
        if name == "laser":
            sp.add_argument("--extended", action="store_true", help="also scan 1/tau_c far past the laser range")
    return p


def _overrides(args) -> dict:
    sim, run = {}, {}
    for flag, key in (("regime", "regime"), ("cnuc", "c_nuc"), ("cel_ppm", "c_el_ppm"),
                      ("power", "power"), ("box_cells", "box_cells")):
        v = getattr(args, flag)
        if v is not None:
            sim[key] = v
    for flag in ("seed", "configs", "workers"):
        v = getattr(args, flag)
        if v is not None:
            run[flag] = v
    out = {}
    if sim:
        out["sim"] = sim
    if run:
        out["run"] = run
    return out


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg, warns = validate_config(args.config, _overrides(args))
    except (ConfigError, OSError) as exc:
        errs = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    for w in warns:
        log.warning(w)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = cfg["run"]["workers"] or os.cpu_count() or 1
    fn = COMMANDS[args.command][0]
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            files = fn(cfg, out, workers, args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": cfg,
        "seed": cfg["run"]["seed"],
        "version": __version__,
        "numpy": np.__version__,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "outputs": files,
        "digests": {k: _digest(v) for k, v in cfg.items()},
    }
    _write_json(out / "manifest.json", manifest)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
