"""Finite-difference reference prices for the one- and two-factor pricing PDEs.

One factor:  P_tau = a(r) P_rr + b(r) P_r - r P,  a = variance / 2.
Two factors: the same per rate plus the correlation term c P_{rd re} and
only the domestic rate discounting.

Space is discretised with second-order differences on uniform grids (upwind
first differences where the cell Peclet number exceeds 2). Time stepping is
Crank-Nicolson in one dimension and the modified Craig-Sneyd ADI scheme in
two, with the mixed derivative always explicit. Both start with implicit
Euler half steps (Rannacher start-up).

Boundaries: where the volatility vanishes (r = 0 with a power volatility) the
equation itself degenerates to a first-order one and is discretised with a
one-sided difference, no value is imposed. The sign of the Fichera function
there is recorded in the metadata. Far boundaries use a vanishing second
derivative with a one-sided first derivative.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.sparse.linalg import splu

from .models import BlackKarasinskiParams, CKLSParams, ConvergenceModel, DomainError

log = logging.getLogger(__name__)

MIN_NODES = 16
RANNACHER_HALF_STEPS = 4
MCS_THETA = 1.0 / 3.0


class PDEInstabilityError(RuntimeError):
    """Solution left the admissible price range."""


@dataclass(frozen=True)
class Grid1D:
    r_min: float
    r_max: float
    n_r: int
    n_tau: int
    tau_max: float

    def __post_init__(self):
        if self.n_r < MIN_NODES or self.n_tau < 1:
            raise ValueError(f"need n_r >= {MIN_NODES} and n_tau >= 1")
        if not self.r_max > self.r_min or not self.tau_max > 0:
            raise ValueError("empty grid")

    @property
    def r(self):
        return np.linspace(self.r_min, self.r_max, self.n_r)


@dataclass(frozen=True)
class Grid2D:
    rd_min: float
    rd_max: float
    re_min: float
    re_max: float
    n_d: int
    n_e: int
    n_tau: int
    tau_max: float

    def __post_init__(self):
        if min(self.n_d, self.n_e) < MIN_NODES or self.n_tau < 1:
            raise ValueError(f"need at least {MIN_NODES} nodes per axis and n_tau >= 1")
        if not (self.rd_max > self.rd_min and self.re_max > self.re_min and self.tau_max > 0):
            raise ValueError("empty grid")

    @property
    def rd(self):
        return np.linspace(self.rd_min, self.rd_max, self.n_d)

    @property
    def re(self):
        return np.linspace(self.re_min, self.re_max, self.n_e)


@dataclass
class PDESolution:
    """Prices P[k, i] (1f) or P[k, i, j] (2f) at maturities taus[k]."""

    taus: np.ndarray
    axes: tuple
    P: np.ndarray
    meta: dict = field(default_factory=dict)

    def _slice(self, tau):
        k = int(np.argmin(np.abs(self.taus - tau)))
        if abs(self.taus[k] - tau) > 1e-9 * max(1.0, tau):
            raise ValueError(f"tau={tau} is not a stored maturity")
        return self.P[k]

    def price(self, tau, *rates):
        """Cubic interpolation in the rates at a stored maturity."""
        Pk = self._slice(tau)
        if len(self.axes) == 1:
            return CubicSpline(self.axes[0], Pk)(np.asarray(rates[0], dtype=float))
        spl = RectBivariateSpline(self.axes[0], self.axes[1], Pk, kx=3, ky=3)
        return spl.ev(np.asarray(rates[0], dtype=float), np.asarray(rates[1], dtype=float))

    def yield_(self, tau, *rates):
        return -np.log(self.price(tau, *rates)) / tau

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            if len(self.axes) == 1:
                w.writerow(["tau", "r", "P"])
                for k, t in enumerate(self.taus):
                    for r, p in zip(self.axes[0], self.P[k]):
                        w.writerow([repr(float(t)), repr(float(r)), repr(float(p))])
            else:
                w.writerow(["tau", "rd", "re", "P"])
                rd, re = self.axes
                for k, t in enumerate(self.taus):
                    for i, x in enumerate(rd):
                        for j, y in enumerate(re):
                            w.writerow([repr(float(t)), repr(float(x)), repr(float(y)),
                                        repr(float(self.P[k, i, j]))])


# --- spatial operators ---------------------------------------------------------

def _line_operator(x, a, b, c, degenerate_left: bool):
    """Triplets (rows, cols, vals) of a P'' + b P' + c P on one grid line.

    Rows 0 and n-1 are the boundary rows described in the module docstring.
    """
    n = len(x)
    h = x[1] - x[0]
    rows, cols, vals = [], [], []

    def put(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    for i in (0, n - 1):
        # one-sided second-order first derivative pointing into the domain
        s = 1 if i == 0 else -1
        put(i, i, c[i] - s * 1.5 * b[i] / h)
        put(i, i + s, s * 2.0 * b[i] / h)
        put(i, i + 2 * s, -s * 0.5 * b[i] / h)
    idx = np.arange(1, n - 1)
    ai, bi, ci = a[idx], b[idx], c[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        peclet = np.where(ai > 0, np.abs(bi) * h / ai, np.inf)
    up = peclet > 2.0
    # diffusion and reaction, central
    rows += list(idx) * 3
    cols += list(idx - 1) + list(idx) + list(idx + 1)
    vals += list(ai / h ** 2) + list(ci - 2 * ai / h ** 2) + list(ai / h ** 2)
    # drift: central, or the second-order one-sided stencil in the upwind
    # direction (first order next to the far boundary)
    cen = ~up
    rows += list(idx[cen]) * 2
    cols += list(idx[cen] - 1) + list(idx[cen] + 1)
    vals += list(-bi[cen] / (2 * h)) + list(bi[cen] / (2 * h))
    for i, bv in zip(idx[up], bi[up]):
        s = 1 if bv > 0 else -1
        if 0 <= i + 2 * s <= n - 1:
            put(i, i, -s * 1.5 * bv / h)
            put(i, i + s, s * 2.0 * bv / h)
            put(i, i + 2 * s, -s * 0.5 * bv / h)
        else:
            put(i, i, -s * bv / h)
            put(i, i + s, s * bv / h)
    return np.asarray(rows), np.asarray(cols), np.asarray(vals), int(up.sum())


def _fichera(drift0, var_slope0):
    """Boundary classification at a degenerate left boundary.

    There the equation reduces to P_tau = b(0) P_r - r P, a transport equation
    whose characteristics come from the interior when b(0) >= 0, so no value
    may be imposed. The Fichera value b(0) - a'(0) is recorded alongside.
    """
    return {"fichera": float(drift0 - var_slope0), "drift_at_boundary": float(drift0),
            "condition_needed": bool(drift0 < 0),
            "boundary": "degenerate equation, no imposed value"}


def _var_slope_at_zero(sigma, gamma):
    """d/dr of sigma^2 r^{2 gamma} / 2 at r = 0+."""
    if gamma > 0.5:
        return 0.0
    if gamma == 0.5:
        return 0.5 * sigma ** 2
    return math.inf


def _check_range(P, r_low, tau_max, grid_desc):
    cap = math.exp(max(0.0, -r_low) * tau_max) * (1 + 1e-8)
    if not np.all(np.isfinite(P)) or P.min() < -1e-8 or P.max() > cap:
        raise PDEInstabilityError(
            f"solution outside [0, {cap:.6g}]: min={np.nanmin(P):.3g}, max={np.nanmax(P):.3g}; grid {grid_desc}")


# --- one factor ----------------------------------------------------------------

def _one_factor_coeffs(model, r):
    if isinstance(model, CKLSParams):
        rp = np.maximum(r, 0.0) if model.gamma > 0 else r
        a = 0.5 * model.sigma ** 2 * (rp ** (2 * model.gamma) if model.gamma > 0 else np.ones_like(r))
        b = model.alpha + model.beta * r
        return a, b, model.gamma > 0, _var_slope_at_zero(model.sigma, model.gamma)
    if isinstance(model, BlackKarasinskiParams):
        if r[0] <= 0:
            raise DomainError("Black-Karasinski grid must stay in r > 0")
        return 0.5 * model.variance(r), model.drift(r), False, 0.0
    raise TypeError(f"unsupported model {type(model).__name__}")


def solve_pde_1f(model, grid: Grid1D) -> PDESolution:
    r = grid.r
    a, b, degenerate, slope0 = _one_factor_coeffs(model, r)
    if degenerate and grid.r_min != 0:
        raise DomainError("for power volatilities the grid must start at r = 0")
    rows, cols, vals, n_up = _line_operator(r, a, b, -r, degenerate)
    L = sp.csc_matrix((vals, (rows, cols)), shape=(len(r), len(r)))
    meta = {"scheme": "crank-nicolson", "rannacher_half_steps": RANNACHER_HALF_STEPS,
            "dr": float(r[1] - r[0]), "dtau": grid.tau_max / grid.n_tau, "upwind_nodes": n_up,
            "right_boundary": "zero second derivative"}
    if degenerate:
        meta.update(_fichera(float(b[0]), slope0))
        log.info("r=0 boundary: condition needed=%s (Fichera %.4g)", meta["condition_needed"], meta["fichera"])
    else:
        meta["left_boundary"] = "zero second derivative"
    P = _time_march_1f(L, len(r), grid.tau_max, grid.n_tau)
    _check_range(P, grid.r_min, grid.tau_max, f"{grid}")
    taus = np.linspace(0.0, grid.tau_max, grid.n_tau + 1)
    return PDESolution(taus, (r,), P, meta)


def _time_march_1f(L, n, tau_max, n_tau):
    dt = tau_max / n_tau
    eye = sp.identity(n, format="csc")
    out = np.empty((n_tau + 1, n))
    u = np.ones(n)
    out[0] = u
    # an implicit Euler half step and the Crank-Nicolson step share I - dt/2 L
    half = cn_lhs = splu((eye - 0.5 * dt * L).tocsc())
    cn_rhs = (eye + 0.5 * dt * L).tocsr()
    n_rannacher = min(RANNACHER_HALF_STEPS // 2, n_tau)
    for k in range(n_tau):
        if k < n_rannacher:
            # two implicit Euler steps of size dt/2
            u = half.solve(half.solve(u))
        else:
            u = cn_lhs.solve(cn_rhs @ u)
        out[k + 1] = u
    return out


# --- two factors -----------------------------------------------------------------

def _conv_operators(m: ConvergenceModel, rd, re):
    nd, ne = len(rd), len(re)
    N = nd * ne
    gid = np.arange(N).reshape(nd, ne)
    rdp = np.maximum(rd, 0.0) if m.gamma_d > 0 else rd
    rep = np.maximum(re, 0.0) if m.gamma_e > 0 else re
    vol_d = m.sigma_d * (rdp ** m.gamma_d if m.gamma_d > 0 else np.ones(nd))
    vol_e = m.sigma_e * (rep ** m.gamma_e if m.gamma_e > 0 else np.ones(ne))
    trip1, trip2 = ([], [], []), ([], [], [])
    n_up = 0
    for j in range(ne):
        rows, cols, vals, u = _line_operator(rd, 0.5 * vol_d ** 2, m.a1 + m.a2 * rd + m.a3 * re[j], -rd,
                                             m.gamma_d > 0)
        n_up += u
        for t, v in zip(trip1, (gid[rows, j], gid[cols, j], vals)):
            t.append(v)
    bl = m.b1 + m.b2 * re
    for i in range(nd):
        rows, cols, vals, u = _line_operator(re, 0.5 * vol_e ** 2, bl, np.zeros(ne), m.gamma_e > 0)
        n_up += u
        for t, v in zip(trip2, (gid[i, rows], gid[i, cols], vals)):
            t.append(v)
    A1 = sp.csr_matrix((np.concatenate(trip1[2]), (np.concatenate(trip1[0]), np.concatenate(trip1[1]))),
                       shape=(N, N))
    A2 = sp.csr_matrix((np.concatenate(trip2[2]), (np.concatenate(trip2[0]), np.concatenate(trip2[1]))),
                       shape=(N, N))
    # mixed derivative on interior nodes, central in both directions
    hd, he = rd[1] - rd[0], re[1] - re[0]
    I, J = np.meshgrid(np.arange(1, nd - 1), np.arange(1, ne - 1), indexing="ij")
    w = m.rho * np.outer(vol_d, vol_e)[1:-1, 1:-1] / (4 * hd * he)
    rows, cols, vals = [], [], []
    for di, dj, s in ((1, 1, 1.0), (-1, -1, 1.0), (1, -1, -1.0), (-1, 1, -1.0)):
        rows.append(gid[I, J].ravel())
        cols.append(gid[I + di, J + dj].ravel())
        vals.append((s * w).ravel())
    A0 = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return A0, A1, A2, n_up


def solve_pde_2f(model: ConvergenceModel, grid: Grid2D, save_taus=None) -> PDESolution:
    """Modified Craig-Sneyd ADI for the convergence-model PDE.

    ``save_taus`` selects the stored maturities (snapped to the time grid);
    by default every step is kept.
    """
    if not isinstance(model, ConvergenceModel):
        raise TypeError("two-factor solver handles ConvergenceModel")
    if not abs(model.rho) < 1:
        raise DomainError("|rho| must be < 1")
    if model.gamma_d > 0 and grid.rd_min != 0:
        raise DomainError("domestic grid must start at 0 for a power volatility")
    if model.gamma_e > 0 and grid.re_min != 0:
        raise DomainError("European grid must start at 0 for a power volatility")
    rd, re = grid.rd, grid.re
    nd, ne = len(rd), len(re)
    A0, A1, A2, n_up = _conv_operators(model, rd, re)
    dt = grid.tau_max / grid.n_tau
    steps = np.arange(grid.n_tau + 1)
    if save_taus is None:
        keep = set(steps.tolist())
    else:
        keep = {0} | {int(round(t / dt)) for t in np.atleast_1d(save_taus)}
        if max(keep) > grid.n_tau:
            raise ValueError("requested maturity beyond tau_max")
    N = nd * ne
    eye = sp.identity(N, format="csc")
    th = MCS_THETA
    lu1, lu2 = splu((eye - th * dt * A1).tocsc()), splu((eye - th * dt * A2).tocsc())
    hdt = 0.5 * dt
    lu1h, lu2h = splu((eye - hdt * A1).tocsc()), splu((eye - hdt * A2).tocsc())
    A = (A0 + A1 + A2).tocsr()
    u = np.ones(N)
    saved = {0: u.reshape(nd, ne).copy()}
    n_rannacher = min(RANNACHER_HALF_STEPS // 2, grid.n_tau)
    for k in range(grid.n_tau):
        if k < n_rannacher:
            for _ in range(2):
                # Douglas splitting with theta = 1 over a half step
                y = u + hdt * (A @ u)
                y = lu1h.solve(y - hdt * (A1 @ u))
                u = lu2h.solve(y - hdt * (A2 @ u))
        else:
            Fu = A @ u
            A1u, A2u, A0u = A1 @ u, A2 @ u, A0 @ u
            y0 = u + dt * Fu
            y1 = lu1.solve(y0 - th * dt * A1u)
            y2 = lu2.solve(y1 - th * dt * A2u)
            yh = y0 + th * dt * (A0 @ y2 - A0u)
            yt = yh + (0.5 - th) * dt * (A @ y2 - Fu)
            y1 = lu1.solve(yt - th * dt * A1u)
            u = lu2.solve(y1 - th * dt * A2u)
        if k + 1 in keep:
            saved[k + 1] = u.reshape(nd, ne).copy()
    idx = sorted(saved)
    P = np.stack([saved[i] for i in idx])
    _check_range(P, grid.rd_min, grid.tau_max, f"{grid}")
    meta = {"scheme": "modified craig-sneyd", "theta": th, "rannacher_half_steps": RANNACHER_HALF_STEPS,
            "drd": float(rd[1] - rd[0]), "dre": float(re[1] - re[0]), "dtau": dt, "upwind_nodes": n_up,
            "far_boundaries": "zero second derivative"}
    if model.gamma_d > 0:
        b0 = model.a1 + model.a3 * max(re.min(), 0.0)
        meta["rd0"] = _fichera(b0, _var_slope_at_zero(model.sigma_d, model.gamma_d))
    if model.gamma_e > 0:
        meta["re0"] = _fichera(model.b1, _var_slope_at_zero(model.sigma_e, model.gamma_e))
    return PDESolution(np.asarray(idx) * dt, (rd, re), P, meta)


def log_residual_2f(model: ConvergenceModel, log_price, rd, re, tau, h: float = 1e-3):
    """Residual L[f] - f_tau of an approximate log-price f in the convergence PDE.

    L[f] = mu_d f_d + mu_e f_e + vd/2 (f_dd + f_d^2) + ve/2 (f_ee + f_e^2)
    + c (f_de + f_d f_e) - rd, the log form of the pricing equation. Rate
    derivatives use fourth-order central differences with step ``h``; the tau
    derivative the same stencil with step tau/100. ``log_price(rd, re, tau)``
    must accept arrays.
    """
    m = model
    w = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    off = np.array([-2.0, -1.0, 1.0, 2.0])

    def d1(g, s):
        return sum(c * g(o * s) for c, o in zip(w, off)) / s

    def d2(g, s):
        return (-g(-2 * s) + 16 * g(-s) - 30 * g(0.0) + 16 * g(s) - g(2 * s)) / (12 * s * s)

    f = lambda a, b, t: log_price(rd + a, re + b, tau + t)  # noqa: E731
    fd = d1(lambda x: f(x, 0.0, 0.0), h)
    fe = d1(lambda x: f(0.0, x, 0.0), h)
    fdd = d2(lambda x: f(x, 0.0, 0.0), h)
    fee = d2(lambda x: f(0.0, x, 0.0), h)
    fde = d1(lambda x: d1(lambda y: f(x, y, 0.0), h), h)
    ft = d1(lambda x: f(0.0, 0.0, x), 1e-2 * tau)
    vd = m.sigma_d ** 2 * np.power(rd, 2 * m.gamma_d)
    ve = m.sigma_e ** 2 * np.power(re, 2 * m.gamma_e)
    c = m.rho * m.sigma_d * m.sigma_e * np.power(rd, m.gamma_d) * np.power(re, m.gamma_e)
    Lf = ((m.a1 + m.a2 * rd + m.a3 * re) * fd + (m.b1 + m.b2 * re) * fe + 0.5 * vd * (fdd + fd * fd)
          + 0.5 * ve * (fee + fe * fe) + c * (fde + fd * fe) - rd)
    return Lf - ft
