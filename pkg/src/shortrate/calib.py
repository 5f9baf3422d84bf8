"""Least-squares calibration of CKLS parameters to yield panels.

The objective is the weighted mean squared yield error

    F = 1/(m n) sum_ij w_ij (R(tau_j, r_i) - R_ij)^2 .

With the Vasicek-substitution approximation ln P = c0 + c1 alpha + c2 sigma^2
the model yield is linear in (alpha, sigma^2), so for fixed (beta, gamma) both
follow from a 2x2 weighted least-squares problem and only beta needs a 1-D
search. For Vasicek the yields are linear in the short rates too, which lets
unobserved short rates be estimated jointly with the parameters.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .approx import approx_log_price, vas_subst_linear_terms
from .closedform import cir_log_price, vasicek_log_price
from .kernels import _int_B_squared, expm1_over, int_expm1_over
from .models import CKLSParams, DomainError, cir

log = logging.getLogger(__name__)

BETA_BRACKET = (-5.0, -1e-4)
BETA_XTOL = 1e-8
SCAN_POINTS = 60
RATIO_FLOOR = 1e-8


class CalibrationError(RuntimeError):
    """Calibration could not produce an answer; ``trace`` holds what was tried."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


@dataclass
class YieldDataset:
    """Yields R[i, j] on days i for maturities taus[j] (decimal rates)."""

    taus: np.ndarray
    yields: np.ndarray
    weights: np.ndarray | None = None
    short_rates: np.ndarray | None = None
    dates: list | None = None

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.yields = np.atleast_2d(np.asarray(self.yields, dtype=float))
        n, m = self.yields.shape
        if self.taus.shape != (m,):
            raise ValueError("one maturity per column is required")
        if np.any(self.taus <= 0) or len(np.unique(self.taus)) != m:
            raise ValueError("maturities must be positive and distinct")
        if not np.all(np.isfinite(self.yields)):
            raise ValueError("yields must be finite")
        if self.weights is None:
            self.weights = np.broadcast_to(self.taus ** 2, (n, m)).copy()
        else:
            self.weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (n, m)).copy()
        if self.short_rates is not None:
            self.short_rates = np.asarray(self.short_rates, dtype=float)
            if self.short_rates.shape != (n,):
                raise ValueError("one short rate per day is required")
        if self.dates is None:
            self.dates = list(range(n))

    @property
    def n(self):
        return self.yields.shape[0]

    @property
    def m(self):
        return self.yields.shape[1]

    def without_short_rates(self) -> "YieldDataset":
        return YieldDataset(self.taus, self.yields, self.weights, None, list(self.dates))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["date", "tau", "yield", "weight"]
            if self.short_rates is not None:
                head.append("short_rate")
            w.writerow(head)
            for i, d in enumerate(self.dates):
                for j, t in enumerate(self.taus):
                    row = [d, repr(float(t)), repr(float(self.yields[i, j])), repr(float(self.weights[i, j]))]
                    if self.short_rates is not None:
                        row.append(repr(float(self.short_rates[i])))
                    w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "YieldDataset":
        """Read ``date,tau,yield[,weight][,short_rate]`` rows (any order)."""
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError("empty dataset")
        missing = {"date", "tau", "yield"} - set(rows[0])
        if missing:
            raise ValueError(f"missing columns: {sorted(missing)}")
        dates = list(dict.fromkeys(r["date"] for r in rows))
        taus = sorted({float(r["tau"]) for r in rows})
        di = {d: i for i, d in enumerate(dates)}
        tj = {t: j for j, t in enumerate(taus)}
        Y = np.full((len(dates), len(taus)), np.nan)
        W = np.broadcast_to(np.asarray(taus) ** 2, Y.shape).copy()
        has_w = "weight" in rows[0] and all(r.get("weight") not in (None, "") for r in rows)
        has_r = "short_rate" in rows[0] and all(r.get("short_rate") not in (None, "") for r in rows)
        rates = np.full(len(dates), np.nan)
        for r in rows:
            i, j = di[r["date"]], tj[float(r["tau"])]
            Y[i, j] = float(r["yield"])
            if has_w:
                W[i, j] = float(r["weight"])
            if has_r:
                rates[i] = float(r["short_rate"])
        if np.isnan(Y).any():
            raise ValueError("panel has missing (date, tau) cells")
        return cls(np.asarray(taus), Y, W, rates if has_r else None, dates)


@dataclass
class CalibrationResult:
    alpha: float
    beta: float
    sigma2: float
    gamma: float
    F: float
    diagnostics: dict = field(default_factory=dict)
    short_rates: np.ndarray | None = None

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))

    @property
    def params(self) -> CKLSParams:
        return CKLSParams(self.alpha, self.beta, self.sigma, self.gamma)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma"] = self.sigma
        if self.short_rates is not None:
            d["short_rates"] = [float(x) for x in self.short_rates]
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), default=_jsonable, **kw)


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


# --- objective ------------------------------------------------------------------

def model_log_price(params: CKLSParams, r, tau, pricer: str = "vas_subst"):
    """ln P under the chosen pricer: an approximation name or "exact"."""
    if pricer == "exact":
        if params.gamma == 0:
            return vasicek_log_price(params, r, tau)
        if params.gamma == 0.5:
            return cir_log_price(params, r, tau)
        raise DomainError("exact prices exist only for gamma in {0, 1/2}")
    if pricer == "cw_ap2":
        return approx_log_price(params, r, tau, "cw", "improved")
    return approx_log_price(params, r, tau, pricer)


def objective_F(params: CKLSParams, data: YieldDataset, pricer: str = "vas_subst") -> float:
    if data.short_rates is None:
        raise ValueError("objective needs observed short rates")
    R = np.empty_like(data.yields)
    for i, r in enumerate(data.short_rates):
        try:
            R[i] = -model_log_price(params, r, data.taus, pricer) / data.taus
        except DomainError as e:
            raise DomainError(f"day {data.dates[i]}: {e}") from e
    return float(np.sum(data.weights * (R - data.yields) ** 2) / data.yields.size)


# --- linear subproblem in (alpha, sigma^2) ----------------------------------------------

def _design(beta, gamma, data: YieldDataset):
    """Yield model R = y0 + a alpha + s sigma^2 on the panel."""
    r = data.short_rates[:, None]
    c0, c1, c2 = vas_subst_linear_terms(beta, gamma, r, data.taus[None, :])
    t = data.taus[None, :]
    return -c0 / t, np.broadcast_to(-c1 / t, data.yields.shape), -c2 / t


def _wls(cols, target, w):
    """Weighted least squares with explicit normal equations (tiny systems)."""
    X = np.stack([c.ravel() for c in cols], axis=1)
    sw = w.ravel()
    N = X.T @ (sw[:, None] * X)
    rhs = X.T @ (sw * target.ravel())
    if np.linalg.cond(N) > 1e14:
        raise CalibrationError("normal equations are singular (too few distinct maturities?)")
    return np.linalg.solve(N, rhs)


def solve_linear_subproblem(beta: float, gamma: float, data: YieldDataset):
    """Optimal (alpha, sigma^2, flagged) for fixed beta and gamma.

    If the unconstrained sigma^2 is negative the constrained optimum lies on
    sigma^2 = 0; alpha is refitted there and ``flagged`` is True.
    """
    if beta == 0:
        raise DomainError("beta must be nonzero")
    if data.short_rates is None:
        raise ValueError("subproblem needs observed short rates")
    y0, a, s = _design(beta, gamma, data)
    target = data.yields - y0
    alpha, sigma2 = _wls([a, s], target, data.weights)
    if sigma2 >= 0:
        return float(alpha), float(sigma2), False
    (alpha,) = _wls([a], target, data.weights)
    return float(alpha), 0.0, True


def _F_linear(beta, gamma, data):
    alpha, sigma2, flagged = solve_linear_subproblem(beta, gamma, data)
    y0, a, s = _design(beta, gamma, data)
    res = y0 + a * alpha + s * sigma2 - data.yields
    return float(np.sum(data.weights * res ** 2) / data.yields.size), alpha, sigma2, flagged


def _minimise_beta(fun, bracket, scan_points=SCAN_POINTS):
    """Coarse scan over the bracket followed by bounded Brent refinement.

    Returns (beta, value, trace); raises CalibrationError if the best point
    sits on the bracket edge.
    """
    lo, hi = bracket
    if not lo < hi < 0:
        raise ValueError("beta bracket must satisfy lo < hi < 0")
    # mean-reversion speeds span decades; scan on a log scale of -beta
    grid = -np.geomspace(-lo, -hi, scan_points)
    trace = []
    for b in grid:
        try:
            trace.append((float(b), fun(b)))
        except (CalibrationError, DomainError, FloatingPointError) as e:
            trace.append((float(b), float("nan")))
            log.debug("beta=%g failed: %s", b, e)
    vals = np.array([v for _, v in trace])
    if np.all(np.isnan(vals)):
        raise CalibrationError("objective failed on the whole bracket", trace)
    k = int(np.nanargmin(vals))
    if k == 0 or k == len(grid) - 1:
        raise CalibrationError(f"minimum at bracket edge beta={grid[k]:.6g}", trace)
    res = minimize_scalar(fun, bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                          options={"xatol": BETA_XTOL, "maxiter": 500})
    return float(res.x), float(res.fun), trace, int(res.nfev)


def calibrate_beta_1d(gamma: float, data: YieldDataset, bracket=BETA_BRACKET) -> CalibrationResult:
    """Minimise beta -> F(beta, alpha*(beta), sigma2*(beta)) for fixed gamma."""
    if data.short_rates is None:
        raise ValueError("calibration needs observed short rates; see latent_short_rate_*")

    def fun(b):
        return _F_linear(b, gamma, data)[0]

    beta, _, trace, nfev = _minimise_beta(fun, bracket)
    F, alpha, sigma2, flagged = _F_linear(beta, gamma, data)
    return CalibrationResult(alpha, beta, sigma2, float(gamma), F,
                             {"bracket": list(bracket), "scan": len(trace), "iterations": nfev,
                              "sigma2_at_bound": flagged})


def gamma_scan(data: YieldDataset, gamma_grid, bracket=BETA_BRACKET) -> list[dict]:
    """One calibration per gamma; rows carry ``result`` or ``error`` and ``argmin``."""
    grid = list(gamma_grid)
    if not grid:
        raise ValueError("empty gamma grid")
    rows = []
    for g in grid:
        try:
            rows.append({"gamma": float(g), "result": calibrate_beta_1d(g, data, bracket), "error": None})
        except (CalibrationError, DomainError) as e:
            rows.append({"gamma": float(g), "result": None, "error": str(e)})
    ok = [i for i, r in enumerate(rows) if r["result"] is not None]
    best = min(ok, key=lambda i: rows[i]["result"].F) if ok else None
    for i, r in enumerate(rows):
        r["argmin"] = i == best
    return rows


# --- latent short rates -----------------------------------------------------------

def _maturity_terms(beta, data):
    """Per-maturity yield loadings x (short rate), a (alpha), s (variance term)."""
    t = data.taus
    x = expm1_over(beta, t) / t
    a = int_expm1_over(beta, t) / t
    s = -0.5 * _int_B_squared(beta, t) / t
    return x, a, s


def _profile_rows(local, glob, data):
    """Eliminate per-day unknowns; return the reduced normal system and back-substitution.

    Day i has yields R_i = L theta_i + G g with local loadings ``local``
    (m x p) and global loadings ``glob`` (m x q) shared by all days.
    """
    m, q = glob.shape
    N = np.zeros((q, q))
    rhs = np.zeros(q)
    solvers = []
    for i in range(data.n):
        w = data.weights[i]
        LW = local.T * w
        M = LW @ local
        if np.linalg.cond(M) > 1e14:
            raise CalibrationError("per-day system is singular (need more maturities)")
        Minv = np.linalg.inv(M)
        # residual maker of the local columns under weights w
        proj_G = glob - local @ (Minv @ (LW @ glob))
        proj_R = data.yields[i] - local @ (Minv @ (LW @ data.yields[i]))
        N += (glob.T * w) @ proj_G
        rhs += (glob.T * w) @ proj_R
        solvers.append((Minv, LW))
    if np.linalg.cond(N) > 1e14:
        raise CalibrationError("global normal system is singular (need at least 2 maturities)")
    return N, rhs, solvers


def _back_substitute(local, glob, g, data, solvers):
    return np.array([Minv @ (LW @ (data.yields[i] - glob @ g)) for i, (Minv, LW) in enumerate(solvers)])


def _latent_vasicek_fixed_beta(beta, data):
    x, a, s = _maturity_terms(beta, data)
    local = x[:, None]
    glob = np.stack([a, s], axis=1)
    N, rhs, solvers = _profile_rows(local, glob, data)
    g = np.linalg.solve(N, rhs)
    flagged = False
    if g[1] < 0:
        N1, rhs1, solvers = _profile_rows(local, glob[:, :1], data)
        g = np.array([rhs1[0] / N1[0, 0], 0.0])
        flagged = True
    r = _back_substitute(local, glob, g, data, solvers)[:, 0]
    res = r[:, None] * x[None, :] + glob @ g - data.yields
    F = float(np.sum(data.weights * res ** 2) / data.yields.size)
    return F, float(g[0]), float(g[1]), r, flagged


def latent_short_rate_vasicek(data: YieldDataset, beta: float | None = None,
                              bracket=BETA_BRACKET) -> CalibrationResult:
    """Joint fit of (alpha, sigma^2) and the daily short rates for gamma = 0.

    With ``beta`` given only the inner linear problem is solved; otherwise beta
    is found by the same 1-D search as calibrate_beta_1d.
    """
    if data.m < 2:
        raise CalibrationError("need at least two maturities")
    diag = {}
    if beta is None:
        beta, _, trace, nfev = _minimise_beta(lambda b: _latent_vasicek_fixed_beta(b, data)[0], bracket)
        diag.update(bracket=list(bracket), scan=len(trace), iterations=nfev)
    elif beta == 0:
        raise DomainError("beta must be nonzero")
    F, alpha, sigma2, r, flagged = _latent_vasicek_fixed_beta(beta, data)
    diag["sigma2_at_bound"] = flagged
    return CalibrationResult(alpha, float(beta), sigma2, 0.0, F, diag, short_rates=r)


def _latent_ckls_fixed_beta(beta, data):
    x, a, s = _maturity_terms(beta, data)
    local = np.stack([x, s], axis=1)
    glob = a[:, None]
    N, rhs, solvers = _profile_rows(local, glob, data)
    g = np.linalg.solve(N, rhs)
    ry = _back_substitute(local, glob, g, data, solvers)
    res = ry[:, :1] * x[None, :] + ry[:, 1:] * s[None, :] + glob @ g - data.yields
    F = float(np.sum(data.weights * res ** 2) / data.yields.size)
    return F, float(g[0]), ry[:, 0], ry[:, 1]


def latent_short_rate_ckls(data: YieldDataset, gamma: float, bracket=BETA_BRACKET) -> CalibrationResult:
    """Latent short rates for CKLS via y_i = sigma^2 r_i^{2 gamma} treated as free.

    For each beta the problem is linear in (alpha, r_i, y_i). Afterwards
    sigma^2 is the median of y_i / r_i^{2 gamma} over days with r_i > 1e-8;
    the spread of those ratios is reported as a consistency diagnostic.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if data.m < 3:
        raise CalibrationError("need at least three maturities (two unknowns per day plus alpha)")
    beta, _, trace, nfev = _minimise_beta(lambda b: _latent_ckls_fixed_beta(b, data)[0], bracket)
    F, alpha, r, y = _latent_ckls_fixed_beta(beta, data)
    ok = r > RATIO_FLOOR
    if not ok.any():
        raise CalibrationError("no day with a positive short rate to estimate sigma^2", trace)
    ratios = y[ok] / r[ok] ** (2 * gamma)
    sigma2 = float(np.median(ratios))
    spread = float((ratios.max() - ratios.min()) / abs(sigma2)) if sigma2 != 0 else float("inf")
    diag = {"bracket": list(bracket), "scan": len(trace), "iterations": nfev,
            "nonpositive_rates": int(np.sum(r <= 0)) if gamma > 0 else 0,
            "ratio_relative_spread": spread, "ratios_used": int(ok.sum())}
    if gamma > 0 and diag["nonpositive_rates"]:
        log.warning("%d estimated short rates are <= 0", diag["nonpositive_rates"])
    return CalibrationResult(alpha, beta, max(sigma2, 0.0), float(gamma), F, diag, short_rates=r)


# --- synthetic panels -------------------------------------------------------------

MONTHLY = np.arange(1, 13) / 12.0
YEARLY = np.arange(1, 6, dtype=float)


def synthetic_cir_panel(params: CKLSParams | None = None, r0: float | None = None, n_days: int = 250,
                        taus=MONTHLY, seed: int = 0, days_per_year: int = 250) -> YieldDataset:
    """Daily panel: Euler CIR short rates, exact CIR yields, default weights.

    Defaults to alpha=0.00315, beta=-0.0555, sigma=0.0894 started at the
    long-run mean.
    """
    from .simulate import SimConfig, simulate_path_1f

    p = params or cir(0.00315, -0.0555, 0.0894)
    if p.gamma != 0.5:
        raise ValueError("synthetic panel generator uses exact CIR prices")
    r0 = -p.alpha / p.beta if r0 is None else r0
    path = simulate_path_1f(p, r0, SimConfig(1.0 / days_per_year, n_days - 1, seed))
    r = np.maximum(path.values, 0.0)
    taus = np.asarray(taus, dtype=float)
    Y = -np.stack([cir_log_price(p, ri, taus) for ri in r]) / taus
    return YieldDataset(taus, Y, None, r)
