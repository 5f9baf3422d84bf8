"""Euler-Maruyama paths and a Monte-Carlo bond-price oracle.

Square-root and power volatilities use full truncation: the Euler state may
dip below zero but drift and volatility are evaluated at max(x, 0) and the
reported rate is max(x, 0). Black-Karasinski is stepped in x = ln r.

Random numbers come from numpy's PCG64. Monte-Carlo work is split into fixed
blocks of paths, block b seeded from (seed, b), so results do not depend on
how blocks are spread over workers.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .models import (AitSahaliaDriftParams, BlackKarasinskiParams, CKLSParams, ConvergenceModel,
                     DomainError, FongVasicekParams, MultiCIRParams)

BLOCK = 1 << 15


@dataclass(frozen=True)
class SimConfig:
    dt: float
    n_steps: int
    seed: int = 0
    n_paths: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1 or self.n_paths < 1:
            raise ValueError("n_steps and n_paths must be >= 1")


@dataclass(frozen=True)
class Path:
    """Simulated path; ``values`` is (n+1,) for one factor, (k, n+1) for k factors."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.times.shape[-1] != np.shape(self.values)[-1]:
            raise ValueError("times and values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def to_csv(self, path, names=None) -> None:
        vals = np.atleast_2d(self.values)
        if names is None:
            names = ["r"] if vals.shape[0] == 1 else ["rd", "re"] if vals.shape[0] == 2 \
                else [f"x{i + 1}" for i in range(vals.shape[0])]
        with open(FsPath(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names])
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in vals[:, i])])


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(block)])))


# --- one-factor stepping -------------------------------------------------------

def _stepper_1f(model):
    """Return (to_state, step, to_rate) for vectorised Euler stepping."""
    if isinstance(model, BlackKarasinskiParams):
        k, th, s = model.kappa, model.theta, model.sigma

        def step(x, dt, dw):
            return x + k * (th - x) * dt + s * dw

        return np.log, step, np.exp
    if isinstance(model, CKLSParams):
        a, b, s, g = model.alpha, model.beta, model.sigma, model.gamma
        if g == 0:
            def step(x, dt, dw):
                return x + (a + b * x) * dt + s * dw

            return _identity, step, _identity

        def step(x, dt, dw):
            xp = np.maximum(x, 0.0)
            return x + (a + b * xp) * dt + s * xp ** g * dw

        return _identity, step, _positive
    if isinstance(model, AitSahaliaDriftParams):
        # the r^-1 drift term is singular at 0; floor the evaluation point
        floor = 1e-12

        def step(x, dt, dw):
            xp = np.maximum(x, floor)
            return x + model.drift(xp) * dt + model.sigma * xp ** model.gamma * dw

        return _identity, step, _positive
    raise TypeError(f"unsupported one-factor model {type(model).__name__}")


def _identity(x):
    return x


def _positive(x):
    return np.maximum(x, 0.0)


def _check_r0_1f(model, r0):
    if isinstance(model, BlackKarasinskiParams) and r0 <= 0:
        raise DomainError("Black-Karasinski needs r0 > 0")
    if isinstance(model, CKLSParams) and model.gamma > 0 and r0 < 0:
        raise DomainError("r0 must be nonnegative")
    if isinstance(model, AitSahaliaDriftParams) and r0 <= 0:
        raise DomainError("r0 must be positive")


def simulate_paths_1f(model, r0: float, cfg: SimConfig, n_paths: int | None = None,
                      block: int = 0) -> np.ndarray:
    """Rates of shape (n_paths, n_steps + 1) from one seeded block."""
    _check_r0_1f(model, r0)
    n = cfg.n_paths if n_paths is None else n_paths
    to_state, step, to_rate = _stepper_1f(model)
    rng = block_rng(cfg.seed, block)
    sq = np.sqrt(cfg.dt)
    out = np.empty((n, cfg.n_steps + 1))
    x = np.full(n, to_state(float(r0)))
    out[:, 0] = r0
    for k in range(cfg.n_steps):
        x = step(x, cfg.dt, sq * rng.standard_normal(n))
        out[:, k + 1] = to_rate(x)
    return out


def simulate_path_1f(model, r0: float, cfg: SimConfig) -> Path:
    times = cfg.dt * np.arange(cfg.n_steps + 1)
    return Path(times, simulate_paths_1f(model, r0, cfg, n_paths=1)[0])


# --- two-factor stepping -------------------------------------------------------

def _correlated(rng, n, rho, sq):
    dw1 = sq * rng.standard_normal(n)
    dz = sq * rng.standard_normal(n)
    return dw1, rho * dw1 + np.sqrt(1.0 - rho * rho) * dz


def simulate_paths_2f(model, x0, cfg: SimConfig, n_paths: int | None = None, block: int = 0,
                      return_increments: bool = False):
    """Factor values of shape (k, n_paths, n_steps + 1).

    For MultiCIRParams the factors are independent CIR processes under the
    real measure (k = number of factors). With ``return_increments`` the
    Brownian increments (k, n_paths, n_steps) are returned as well.
    """
    n = cfg.n_paths if n_paths is None else n_paths
    rng = block_rng(cfg.seed, block)
    sq = np.sqrt(cfg.dt)
    dt = cfg.dt
    x0 = np.asarray(x0, dtype=float)
    if isinstance(model, ConvergenceModel):
        m = model
        cur = [np.full(n, x0[0]), np.full(n, x0[1])]
        gd, ge = m.gamma_d, m.gamma_e
        if (gd > 0 and x0[0] < 0) or (ge > 0 and x0[1] < 0):
            raise DomainError("rates must be nonnegative for power volatilities")
        rho = m.rho

        def step(cur, dws):
            rd, re = cur
            rdp = np.maximum(rd, 0.0) if gd > 0 else rd
            rep = np.maximum(re, 0.0) if ge > 0 else re
            vd = m.sigma_d * (rdp ** gd if gd > 0 else 1.0)
            ve = m.sigma_e * (rep ** ge if ge > 0 else 1.0)
            return [rd + (m.a1 + m.a2 * rdp + m.a3 * rep) * dt + vd * dws[0],
                    re + (m.b1 + m.b2 * rep) * dt + ve * dws[1]]

        def report(cur):
            return [np.maximum(cur[0], 0.0) if gd > 0 else cur[0],
                    np.maximum(cur[1], 0.0) if ge > 0 else cur[1]]

        draw = lambda: _correlated(rng, n, rho, sq)  # noqa: E731
    elif isinstance(model, FongVasicekParams):
        p = model
        if x0[1] < 0:
            raise DomainError("variance factor must be nonnegative")
        cur = [np.full(n, x0[0]), np.full(n, x0[1])]

        def step(cur, dws):
            r, y = cur
            yp = np.maximum(y, 0.0)
            sy = np.sqrt(yp)
            return [r + p.kappa1 * (p.theta1 - r) * dt + sy * dws[0],
                    y + p.kappa2 * (p.theta2 - yp) * dt + p.v * sy * dws[1]]

        def report(cur):
            return [cur[0], np.maximum(cur[1], 0.0)]

        draw = lambda: _correlated(rng, n, p.rho, sq)  # noqa: E731
    elif isinstance(model, MultiCIRParams):
        fs = model.factors
        if x0.shape != (len(fs),):
            raise ValueError("need one starting value per factor")
        if np.any(x0 < 0):
            raise DomainError("factor values must be nonnegative")
        cur = [np.full(n, v) for v in x0]

        def step(cur, dws):
            out = []
            for f, x, dw in zip(fs, cur, dws):
                xp = np.maximum(x, 0.0)
                out.append(x + f.kappa * (f.theta - xp) * dt + f.sigma * np.sqrt(xp) * dw)
            return out

        def report(cur):
            return [np.maximum(x, 0.0) for x in cur]

        draw = lambda: [sq * rng.standard_normal(n) for _ in fs]  # noqa: E731
    else:
        raise TypeError(f"unsupported two-factor model {type(model).__name__}")

    k = len(cur)
    out = np.empty((k, n, cfg.n_steps + 1))
    out[:, :, 0] = x0[:, None]
    incs = np.empty((k, n, cfg.n_steps)) if return_increments else None
    for s in range(cfg.n_steps):
        dws = draw()
        if incs is not None:
            incs[:, :, s] = dws
        cur = step(cur, dws)
        out[:, :, s + 1] = report(cur)
    return (out, incs) if return_increments else out


def simulate_path_2f(model, x0, cfg: SimConfig) -> Path:
    times = cfg.dt * np.arange(cfg.n_steps + 1)
    return Path(times, simulate_paths_2f(model, x0, cfg, n_paths=1)[:, 0, :])


# --- Monte-Carlo bond price ----------------------------------------------------------

def _block_discount_1f(model, r0, cfg, n, b, taus):
    """exp(-left-endpoint integral of r) at each maturity in ``taus`` for one block."""
    to_state, step, to_rate = _stepper_1f(model)
    rng = block_rng(cfg.seed, b)
    stops = {int(round(t / cfg.dt)): j for j, t in enumerate(taus)}
    sq = np.sqrt(cfg.dt)
    x = np.full(n, to_state(float(r0)))
    r = np.full(n, float(r0))
    integral = np.zeros(n)
    out = np.empty((len(taus), n))
    n_steps = max(stops)
    for k in range(n_steps):
        integral += r * cfg.dt
        if k + 1 in stops:
            out[stops[k + 1]] = np.exp(-integral)
        if k + 1 < n_steps:
            x = step(x, cfg.dt, sq * rng.standard_normal(n))
            r = to_rate(x)
    return out


def _block_sizes(n_paths):
    full, rest = divmod(n_paths, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def mc_bond_prices(model, r0: float, taus, cfg: SimConfig, workers: int = 1):
    """Prices and standard errors at several maturities from one set of paths.

    Each maturity must be a whole number of steps ``cfg.dt``.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus <= 0):
        raise DomainError("tau must be positive")
    steps = np.round(taus / cfg.dt)
    if np.any(np.abs(steps * cfg.dt - taus) > 1e-9 * np.maximum(taus, 1.0)):
        raise ValueError("maturities must be multiples of dt")
    _check_r0_1f(model, r0)
    sizes = _block_sizes(cfg.n_paths)

    def run(b):
        d = _block_discount_1f(model, r0, cfg, sizes[b], b, taus)
        # shift by the first sample so identical samples give exactly zero spread
        dev = d - d[:, :1]
        shift = dev.mean(axis=1)
        return d.shape[1], d[:, 0] + shift, ((dev - shift[:, None]) ** 2).sum(axis=1)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    # pairwise (Chan et al.) merge of block means and squared deviations
    n, mean, m2 = parts[0]
    for nb, mb, m2b in parts[1:]:
        delta = mb - mean
        tot = n + nb
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta * delta * n * nb / tot
        n = tot
    var = m2 / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def mc_bond_price(model, r0: float, tau: float, cfg: SimConfig, workers: int = 1):
    """(price, standard error) of E[exp(-sum r_k dt)] over ``cfg.n_paths`` paths.

    The number of steps is round(tau / cfg.dt); ``cfg.n_steps`` is ignored.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    dt = tau / max(1, round(tau / cfg.dt))
    c = SimConfig(dt, max(1, round(tau / cfg.dt)), cfg.seed, cfg.n_paths)
    p, se = mc_bond_prices(model, r0, [tau], c, workers)
    return float(p[0]), float(se[0])
