"""Fits of decay curves to ``exp(-(R_p t)^gamma) exp(-R_d t)``.

In log space the model is linear in ``(R_p^gamma, R_d)``, so the global
optimum of the log-residual objective under non-negativity is a
non-negative least squares problem. A bounded multi-start L-BFGS-B search
over ``(R_p, R_d)`` runs alongside as an independent check; both must agree.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import minimize, nnls
from scipy.special import gamma as gamma_fn

MIN_POINTS = 50


@dataclass
class FitResult:
    R_p: float
    R_d: float
    gamma: float
    rms: float  # linear-space RMS residual
    rrms: float
    log_rms: float  # RMS residual of the fitted log-values
    window: tuple
    converged: bool
    at_bound: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def model(self, t):
        return emergent_model(t, self.R_p, self.R_d, self.gamma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("history")
        d["window"] = list(self.window)
        return d


def emergent_model(t, R_p, R_d, gamma=0.5):
    t = np.asarray(t, dtype=float)
    return np.exp(-((R_p * t) ** gamma) - R_d * t)


def rrms(data, model) -> float:
    """sqrt(<(data - model)^2>) / sqrt(<data^2>)."""
    data = np.asarray(data, dtype=float)
    model = np.asarray(model, dtype=float)
    if data.shape != model.shape:
        raise ValueError("data and model must have equal lengths")
    denom = math.sqrt(np.mean(data**2))
    if denom == 0:
        raise ValueError("rrms undefined for all-zero data")
    return math.sqrt(np.mean((data - model) ** 2)) / denom


def _window(t, y, window):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is None:
        sel = np.ones(len(t), dtype=bool)
    else:
        sel = (t >= window[0]) & (t <= window[1])
    return t[sel], y[sel]


def _one_over_e_time(t, y):
    below = np.nonzero(y <= math.exp(-1))[0]
    if len(below):
        return float(t[below[0]])
    # extrapolate from the last point assuming a single exponential
    slope = -math.log(max(y[-1], 1e-300)) / t[-1]
    return 1.0 / slope if slope > 0 else float(t[-1])


def fit_emergent(
    t,
    y=None,
    window=None,
    gamma: float = 0.5,
    fix: str | None = None,
    min_points: int = MIN_POINTS,
) -> FitResult:
    """Least-squares fit of the log-values.

    ``t`` may be a DecayCurve, in which case ``y`` is taken from it.
    ``fix`` is None, ``"R_d"`` (R_d held at 0) or ``"R_p"`` (R_p held at 0).
    """
    if y is None:
        t, y = t.times, t.values
    tw, yw = _window(t, y, window)
    if len(tw) < min_points:
        raise ValueError(f"need >= {min_points} points in the fit window, got {len(tw)}")
    if np.any(yw <= 0) or not np.all(np.isfinite(yw)):
        raise ValueError("fit window contains non-positive or non-finite values")
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if fix not in (None, "R_p", "R_d"):
        raise ValueError("fix must be None, 'R_p' or 'R_d'")

    logy = np.log(yw)
    active = [fix != "R_p", fix != "R_d"]
    cols = np.column_stack([tw**gamma, tw])[:, active]
    # route 1: exact non-negative least squares in (R_p^gamma, R_d)
    coef, _ = nnls(cols, -logy)
    full = np.zeros(2)
    full[np.nonzero(active)[0]] = coef
    Rp_ls = full[0] ** (1.0 / gamma) if full[0] > 0 else 0.0
    Rd_ls = full[1]

    def objective(Rp, Rd):
        return float(np.mean((logy + (Rp * tw) ** gamma + Rd * tw) ** 2))

    # route 2: bounded multi-start search in scaled rates
    scale = 1.0 / _one_over_e_time(tw, yw)
    best = None
    history = []
    starts = [(a, b) for a in (0.1, 1.0, 10.0) for b in (0.1, 1.0, 10.0)]
    n_success = 0
    for a, b in starts:
        x0 = np.array([a if active[0] else 0.0, b if active[1] else 0.0])
        trace = []

        def f(x):
            return objective(x[0] * scale, x[1] * scale)

        bounds = [(0.0, None) if active[0] else (0.0, 0.0), (0.0, None) if active[1] else (0.0, 0.0)]
        res = minimize(
            f, x0, method="L-BFGS-B", bounds=bounds,
            callback=lambda xk: trace.append(f(xk)),
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000},
        )
        n_success += bool(res.success)
        history.append(trace)
        if best is None or res.fun < best.fun:
            best = res
    if n_success == 0:
        raise RuntimeError("no optimizer start converged")

    obj_ls = objective(Rp_ls, Rd_ls)
    obj_ms = float(best.fun)
    # agreement in RMS log-residual, relative to the spread of the data
    agree = math.sqrt(obj_ms) - math.sqrt(obj_ls) <= 1e-4 * math.sqrt(obj_ls) + 1e-6 * float(np.sqrt(np.mean(logy**2)))
    if obj_ms < obj_ls:
        R_p, R_d = best.x[0] * scale, best.x[1] * scale
    else:
        R_p, R_d = Rp_ls, Rd_ls
    if not agree:
        warnings.warn("multi-start search did not reach the non-negative least squares optimum")

    model = emergent_model(tw, R_p, R_d, gamma)
    return FitResult(
        R_p=float(R_p),
        R_d=float(R_d),
        gamma=gamma,
        rms=float(np.sqrt(np.mean((yw - model) ** 2))),
        rrms=rrms(yw, model),
        log_rms=math.sqrt(min(obj_ls, obj_ms)),
        window=(float(tw[0]), float(tw[-1])),
        converged=bool(agree),
        at_bound={"R_p": R_p == 0.0, "R_d": R_d == 0.0},
        history=history,
    )


def gamma_sweep(t, y=None, gammas=None, window=None, metric: str = "rms"):
    """RMS residual of the two-rate fit per stretching exponent.

    Returns (table with rows (gamma, rms), argmin gamma).
    """
    if y is None:
        t, y = t.times, t.values
    if gammas is None:
        gammas = np.round(np.arange(0.30, 0.9001, 0.05), 10)
    gammas = np.asarray(gammas, dtype=float)
    if gammas.min() > 0.3 + 1e-12 or gammas.max() < 0.9 - 1e-12:
        raise ValueError("gamma grid must cover [0.3, 0.9]")
    if len(gammas) > 1 and np.max(np.diff(np.sort(gammas))) > 0.05 + 1e-12:
        raise ValueError("gamma grid step must be <= 0.05")
    rows = []
    for g in gammas:
        fr = fit_emergent(t, y, window=window, gamma=float(g))
        rows.append((float(g), getattr(fr, metric)))
    table = np.array(rows)
    return table, float(table[np.argmin(table[:, 1]), 0])


# ----------------------------------------------------------------------------
# diffusionless oracle


def poisson_survival_exact(A, density, times, power: float = 6.0, dim: int = 3):
    """Closed-form mean survival for Poisson sinks with rate A / r**power in 3D.

    -log S = density * (4 pi / 3) * Gamma(1 - 3/power) * (A t)^(3/power)
    """
    if dim != 3:
        raise ValueError("only three dimensions are supported")
    if power <= 3:
        raise ValueError("power must exceed the dimension")
    x = 3.0 / power
    t = np.asarray(times, dtype=float)
    return np.exp(-density * (4 * math.pi / 3) * gamma_fn(1 - x) * (A * t) ** x)


def poisson_stretched_oracle(
    A: float,
    density: float,
    n_samples: int,
    times,
    power: float = 6.0,
    seed: int = 0,
    tol: float = 1e-3,
):
    """Monte Carlo survival ``<prod_i exp(-A t / r_i^power)>`` over Poisson sinks.

    Sinks inside a ball are sampled explicitly; those outside contribute their
    mean rate. The ball radius keeps the neglected second cumulant of the
    outer shell below ``tol`` at the last time.

    Returns (survival, fitted exponent, ball radius).
    """
    if density <= 0:
        raise ValueError("density must be positive")
    times = np.asarray(times, dtype=float)
    if A == 0:
        return np.ones(len(times)), float("nan"), 0.0
    rng = np.random.default_rng(seed)
    t_max = float(times.max())
    # outer-shell rate variance 4 pi n A^2 R^(3 - 2p) / (2p - 3)
    R = (0.5 * t_max**2 * 4 * math.pi * density * A**2 / ((2 * power - 3) * tol)) ** (1 / (2 * power - 3))
    R = max(R, 3.0 * density ** (-1 / 3))
    far_rate = 4 * math.pi * density * A * R ** (3 - power) / (power - 3)
    lam = density * 4 / 3 * math.pi * R**3
    counts = rng.poisson(lam, n_samples)
    X = np.empty(n_samples)
    for i, n in enumerate(counts):
        r = R * rng.random(n) ** (1 / 3)
        X[i] = A * np.sum(r ** (-power))
    X += far_rate
    surv = np.exp(-np.outer(X, times)).mean(axis=0)
    return surv, fit_stretch_exponent(times, surv), R


def fit_stretch_exponent(times, surv, lo: float = 0.02, hi: float = 0.98) -> float:
    """Slope of log(-log S) against log t over lo < S < hi."""
    times = np.asarray(times, dtype=float)
    surv = np.asarray(surv, dtype=float)
    sel = (surv > lo) & (surv < hi)
    if sel.sum() < 3:
        raise ValueError("too few points in the survival window")
    slope, _ = np.polyfit(np.log(times[sel]), np.log(-np.log(surv[sel])), 1)
    return float(slope)
