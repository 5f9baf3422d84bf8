"""Exponent expansion of Arrow-Debreu prices for constant-volatility models.

The state x follows dx = mu(x) dt + sigma dw and the short rate is r(x). The
Arrow-Debreu price is written as a Gaussian kernel times exp(-W) with
W = sum_n W_n(x; x0) t^n. Each W_n solves a first-order linear ODE in
y = x - x0 (see docs/exponent_expansion.md):

    W_0' = -mu / sigma^2,        W_0(x0) = 0
    n W_n + y W_n' = R_n,        n >= 1

with R_n built from W_0..W_{n-1}. We solve these exactly in the space of
Taylor coefficients in y, where the ODE reduces to a_k = R_{n,k} / (n + k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import gammaln

from .models import BlackKarasinskiParams, DomainError

MAX_ORDER = 8
# exponents above this come from the divergent tail of the truncated series
EXPONENT_CAP = 50.0


@dataclass(frozen=True)
class TransformedModel:
    """dx = mu(x) dt + sigma dw with short rate r(x).

    ``drift`` holds the polynomial coefficients of mu in ascending powers of x.
    ``rate_kind`` is "exp" for r = rate_scale * e^x or "poly" for a polynomial
    with coefficients ``rate_coeffs``.
    """

    drift: tuple[float, ...]
    sigma: float
    rate_kind: str = "exp"
    rate_scale: float = 1.0
    rate_coeffs: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.rate_kind not in ("exp", "poly"):
            raise ValueError("rate_kind must be 'exp' or 'poly'")
        object.__setattr__(self, "drift", tuple(float(c) for c in self.drift))
        object.__setattr__(self, "rate_coeffs", tuple(float(c) for c in self.rate_coeffs))

    def rate(self, x):
        x = np.asarray(x, dtype=float)
        if self.rate_kind == "exp":
            return self.rate_scale * np.exp(x)
        return npoly.polyval(x, self.rate_coeffs) if self.rate_coeffs else np.zeros_like(x)

    def mu(self, x):
        return npoly.polyval(np.asarray(x, dtype=float), self.drift) if self.drift else 0.0 * x

    def _shifted(self, coeffs, x0, K):
        """Taylor coefficients in y of a polynomial in x = x0 + y, padded to K+1."""
        out = np.zeros(K + 1)
        if coeffs:
            p = npoly.Polynomial(coeffs)(npoly.Polynomial([x0, 1.0])).coef
            out[: min(len(p), K + 1)] = p[: K + 1]
        return out

    def drift_taylor(self, x0, K):
        return self._shifted(self.drift, x0, K)

    def rate_taylor(self, x0, K):
        if self.rate_kind == "exp":
            k = np.arange(K + 1, dtype=float)
            return self.rate_scale * np.exp(x0 - gammaln(k + 1.0))
        return self._shifted(self.rate_coeffs, x0, K)


def black_karasinski(p: BlackKarasinskiParams) -> TransformedModel:
    """x = ln r with dx = kappa (theta - x) dt + sigma dw."""
    return TransformedModel(drift=(p.kappa * p.theta, -p.kappa), sigma=p.sigma, rate_kind="exp")


def _deriv(a):
    out = np.zeros_like(a)
    out[:-1] = a[1:] * np.arange(1, len(a))
    return out


def _mul(a, b):
    return np.convolve(a, b)[: len(a)]


@lru_cache(maxsize=4096)
def _w_coeffs_cached(model: TransformedModel, x0: float, N: int, K: int) -> np.ndarray:
    s2 = model.sigma ** 2
    mu = model.drift_taylor(x0, K)
    dmu = _deriv(mu)
    r = model.rate_taylor(x0, K)
    k = np.arange(K + 1)
    W = np.zeros((N + 1, K + 1))
    dW = np.zeros((N + 1, K + 1))
    # W_0 = -(1/sigma^2) int_0^y mu
    W[0, 1:] = -mu[:-1] / s2 / k[1:]
    dW[0] = _deriv(W[0])
    for n in range(1, N + 1):
        R = -_mul(mu, dW[n - 1]) + 0.5 * s2 * _deriv(dW[n - 1])
        for i in range(n):
            R -= 0.5 * s2 * _mul(dW[i], dW[n - 1 - i])
        if n == 1:
            R = R + r + dmu
        W[n] = R / (n + k)
        dW[n] = _deriv(W[n])
    W.setflags(write=False)
    return W


def series_terms_for(half_width: float) -> int:
    """Number of Taylor terms that resolves e^y-type growth on |y| <= half_width."""
    return int(min(600, 3.0 * math.e * half_width + 30))


def w_taylor_coeffs(model: TransformedModel, x0: float, N: int, K: int = 120) -> np.ndarray:
    """Array (N+1, K+1) of Taylor coefficients of W_n in powers of y = x - x0."""
    if not 0 <= N <= MAX_ORDER:
        raise ValueError(f"order must be in [0, {MAX_ORDER}]")
    return _w_coeffs_cached(model, float(x0), int(N), int(K))


def ee_coeffs(model: TransformedModel, x, x0: float, N: int, K: int | None = None):
    """Values W_0(x; x0) .. W_N(x; x0); shape (N+1,) + shape(x)."""
    y = np.asarray(x, dtype=float) - x0
    if K is None:
        K = series_terms_for(float(np.max(np.abs(y))) if y.size else 0.0)
    W = w_taylor_coeffs(model, x0, N, K)
    return np.array([npoly.polyval(y, W[n]) for n in range(N + 1)])


def _log_kernel(model: TransformedModel, y, t: float, x0: float, N: int, K: int):
    """Exponent -y^2/(2 sigma^2 t) - W(x0 + y, t; x0), capped where the series diverges."""
    W = w_taylor_coeffs(model, x0, N, K)
    # summing per order keeps the large alternating Taylor terms of each W_n apart
    ex = -y * y / (2 * model.sigma ** 2 * t)
    for n in range(N + 1):
        ex = ex - npoly.polyval(y, W[n]) * t ** n
    return np.where(ex > EXPONENT_CAP, -np.inf, ex)


def arrow_debreu(model: TransformedModel, x, t: float, x0: float, N: int, K: int | None = None):
    """Order-N exponent-expansion approximation of psi(x, t; x0)."""
    if not t > 0:
        raise DomainError("t must be positive")
    y = np.asarray(x, dtype=float) - x0
    if K is None:
        K = series_terms_for(float(np.max(np.abs(y))) if y.size else 0.0)
    ex = _log_kernel(model, y, t, x0, N, K)
    return np.exp(ex) / math.sqrt(2 * math.pi * model.sigma ** 2 * t)


def ee_bond_price(model: TransformedModel, x0: float, tau: float, N: int,
                  width: float = 8.0, tol: float = 1e-12) -> float:
    """Bond price as the integral of psi over x.

    Trapezoidal rule on a uniform grid (spectrally accurate for this smooth,
    rapidly decaying integrand); the domain spans x0 and x0 + mu(x0) tau,
    padded by width sigma sqrt(tau), and grows until the outermost cells carry
    less than ``tol``.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")
    s = model.sigma * math.sqrt(tau)
    h = 0.05 * s
    # the mass drifts by about mu(x0) tau, which dominates sigma sqrt(tau) for small sigma
    shift = float(model.mu(x0)) * tau
    lo_y, hi_y = min(0.0, shift), max(0.0, shift)
    for _ in range(6):
        L = width * s
        y = np.arange(math.floor((lo_y - L) / h), math.ceil((hi_y + L) / h) + 1) * h
        psi = arrow_debreu(model, x0 + y, tau, x0, N, K=series_terms_for(float(np.max(np.abs(y)))))
        tail = h * (psi[:5].sum() + psi[-5:].sum())
        if tail < tol:
            break
        width += 2.0
    return float(h * psi.sum())


def _kernel_matrix(model: TransformedModel, grid: np.ndarray, dt: float, N: int, width: float,
                   sources: np.ndarray | None = None) -> np.ndarray:
    """M[i, j] = h psi(grid[j], dt; sources[i]) restricted to |y| <= width sigma sqrt(dt)."""
    sources = grid if sources is None else sources
    h = grid[1] - grid[0]
    L = width * model.sigma * math.sqrt(dt)
    K = series_terms_for(L)
    norm = h / math.sqrt(2 * math.pi * model.sigma ** 2 * dt)
    M = np.zeros((len(sources), len(grid)))
    for i, xs in enumerate(sources):
        y = grid - xs
        m = np.abs(y) <= L
        M[i, m] = norm * np.exp(_log_kernel(model, y[m], dt, float(xs), N, K))
    return M


def ee_bond_price_convolution(model: TransformedModel, x0: float, tau: float, N: int, step: float,
                              width: float = 6.0, pad: float = 8.0, h_frac: float = 0.25) -> float:
    """Long-maturity price by chaining short-time kernels (Chapman-Kolmogorov).

    Maturity is cut into slices of length ``step`` with a shortened last slice.
    Values are propagated backwards on a uniform grid containing x0; the grid
    covers ``pad`` standard deviations of the Gaussian approximation of x
    around the drift's rest point and x0. Kernels are reused across slices of
    equal length.
    """
    if not step > 0:
        raise DomainError("step must be positive")
    if not tau > 0:
        raise DomainError("tau must be positive")
    step = min(step, tau)
    n_full = int(math.floor(tau / step + 1e-12))
    rest = tau - n_full * step
    steps = [step] * n_full + ([rest] if rest > 1e-12 * tau else [])
    sig = model.sigma
    # spread of x at the horizon; the linear part of the drift sets the reversion
    slope = model.drift[1] if len(model.drift) > 1 else 0.0
    if slope < 0:
        spread = sig * math.sqrt(-np.expm1(2 * slope * tau) / (-2 * slope))
        centre = -model.drift[0] / slope
    else:
        spread, centre = sig * math.sqrt(tau), x0
    spread = max(spread, sig * math.sqrt(step))
    h = h_frac * sig * math.sqrt(min(steps))
    lo = min(x0, centre) - pad * spread
    hi = max(x0, centre) + pad * spread
    grid = x0 + h * np.arange(math.floor((lo - x0) / h), math.ceil((hi - x0) / h) + 1)
    v = np.ones_like(grid)
    cache: dict[float, np.ndarray] = {}
    with np.errstate(over="ignore"):
        for k in range(len(steps) - 1, 0, -1):
            d = steps[k]
            if d not in cache:
                cache[d] = _kernel_matrix(model, grid, d, N, width)
            v = cache[d] @ v
        first = _kernel_matrix(model, grid, steps[0], N, width, sources=np.array([x0]))
    return float((first @ v)[0])
