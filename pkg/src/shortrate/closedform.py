"""Exact zero-coupon bond prices.

Prices are returned as discount factors; the ``*_log_price`` variants return
ln P, which is what the approximation error analysis works with.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .kernels import conv_A, conv_DU, vasicek_log_price_terms
from .models import CKLSParams, ConvergenceModel, DomainError, MultiCIRParams, VasicekRealParams

ODE_RTOL = 1e-12
ODE_ATOL = 1e-14


@dataclass(frozen=True)
class AffineSolution:
    """ln P = A(tau) - B(tau) r_d - U(tau) r_e (U is None for one factor)."""

    A: Callable
    B: Callable
    U: Optional[Callable] = None

    def log_price(self, r, tau, re=0.0):
        out = self.A(tau) - self.B(tau) * r
        if self.U is not None:
            out = out - self.U(tau) * re
        return out

    def price(self, r, tau, re=0.0):
        return np.exp(self.log_price(r, tau, re))


def _check_tau(tau):
    if np.any(np.asarray(tau) < 0):
        raise DomainError("tau must be nonnegative")


# --- Vasicek ------------------------------------------------------------------

def vasicek_log_price(p: CKLSParams, r, tau):
    """ln P for dr = (alpha + beta r) dt + sigma dw."""
    if p.gamma != 0:
        raise DomainError("vasicek_price needs gamma = 0")
    if p.beta == 0:
        raise DomainError("beta must be nonzero")
    _check_tau(tau)
    return vasicek_log_price_terms(p.alpha, p.beta, p.sigma ** 2, np.asarray(r, dtype=float), tau)


def vasicek_price(p: CKLSParams, r, tau):
    return np.exp(vasicek_log_price(p, r, tau))


def vasicek_price_real(p: VasicekRealParams, r, tau):
    """P = A e^{-B r} in the (kappa, theta, sigma, lambda) parametrisation."""
    k, th, s, lam = p.kappa, p.theta, p.sigma, p.lam
    tau = np.asarray(tau, dtype=float)
    B = -np.expm1(-k * tau) / k
    lnA = (-th + lam * s / k + s * s / (2 * k * k)) * (-B + tau) - s * s / (4 * k ** 3) * np.expm1(-k * tau) ** 2
    return np.exp(lnA - B * np.asarray(r, dtype=float))


# --- CIR ----------------------------------------------------------------------

def cir_AB(p: CKLSParams, tau):
    """ln A(tau) and B(tau) for dr = (alpha + beta r) dt + sigma sqrt(r) dw."""
    if p.sigma <= 0:
        raise DomainError("sigma must be positive")
    tau = np.asarray(tau, dtype=float)
    a, b, s2 = p.alpha, p.beta, p.sigma ** 2
    h = np.sqrt(b * b + 2.0 * s2)
    em1 = np.expm1(h * tau)
    denom = 2.0 * h + (h - b) * em1
    B = 2.0 * em1 / denom
    lnA = (2.0 * a / s2) * ((h - b) * tau / 2.0 - np.log1p((h - b) * em1 / (2.0 * h)))
    return lnA, B


def cir_log_price(p: CKLSParams, r, tau):
    if p.gamma != 0.5:
        raise DomainError("cir_price needs gamma = 1/2")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("r must be nonnegative")
    _check_tau(tau)
    lnA, B = cir_AB(p, tau)
    return lnA - B * r


def cir_price(p: CKLSParams, r, tau):
    return np.exp(cir_log_price(p, r, tau))


def cir_riccati_ode(p: CKLSParams, tau: float):
    """Integrate B' = 1 + beta B - sigma^2 B^2/2, (ln A)' = -alpha B numerically."""

    def rhs(_, y):
        B = y[1]
        return [-p.alpha * B, 1.0 + p.beta * B - 0.5 * p.sigma ** 2 * B * B]

    if tau == 0:
        return 0.0, 0.0
    sol = solve_ivp(rhs, (0.0, tau), [0.0, 0.0], method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL)
    return float(sol.y[0, -1]), float(sol.y[1, -1])


# --- convergence models -----------------------------------------------------------

def _check_conv(m: ConvergenceModel):
    if m.a2 == m.b2:
        raise DomainError("a2 == b2 is excluded")
    if m.a2 == 0 or m.b2 == 0:
        raise DomainError("a2 and b2 must be nonzero")


def conv_vasicek_solution(m: ConvergenceModel) -> AffineSolution:
    if m.gamma_d != 0 or m.gamma_e != 0:
        raise DomainError("conv_vasicek_price needs gamma_d = gamma_e = 0")
    _check_conv(m)
    vd, ve, cde = m.sigma_d ** 2, m.sigma_e ** 2, m.rho * m.sigma_d * m.sigma_e
    return AffineSolution(
        A=lambda t: conv_A(m.a1, m.a2, m.a3, m.b1, m.b2, vd, ve, cde, t),
        B=lambda t: conv_DU(m.a2, m.a3, m.b2, t)[0],
        U=lambda t: conv_DU(m.a2, m.a3, m.b2, t)[1],
    )


def conv_vasicek_log_price(m: ConvergenceModel, rd, re, tau):
    _check_tau(tau)
    return conv_vasicek_solution(m).log_price(np.asarray(rd, dtype=float), tau, np.asarray(re, dtype=float))


def conv_vasicek_price(m: ConvergenceModel, rd, re, tau):
    return np.exp(conv_vasicek_log_price(m, rd, re, tau))


def conv_cir_ADU(m: ConvergenceModel, taus):
    """A, D, U at the requested maturities from the uncorrelated CIR-type ODEs."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float)).ravel()
    sd2, se2 = m.sigma_d ** 2, m.sigma_e ** 2

    def rhs(_, y):
        A, D, U = y
        return [-m.a1 * D - m.b1 * U,
                1.0 + m.a2 * D - 0.5 * sd2 * D * D,
                m.a3 * D + m.b2 * U - 0.5 * se2 * U * U]

    out = np.zeros((3, taus.size))
    tmax = float(taus.max())
    if tmax > 0:
        sol = solve_ivp(rhs, (0.0, tmax), [0.0, 0.0, 0.0], method="DOP853", rtol=ODE_RTOL,
                        atol=ODE_ATOL, dense_output=False, t_eval=np.unique(taus[taus > 0]))
        lookup = dict(zip(sol.t, sol.y.T))
        for i, t in enumerate(taus):
            if t > 0:
                out[:, i] = lookup[t]
    return out


def conv_cir_log_price(m: ConvergenceModel, rd, re, tau):
    """Uncorrelated convergence CIR model; separable only when rho = 0."""
    if m.rho != 0:
        raise DomainError("no separable solution for rho != 0")
    if m.gamma_d != 0.5 or m.gamma_e != 0.5:
        raise DomainError("conv_cir_price needs gamma_d = gamma_e = 1/2")
    rd = np.asarray(rd, dtype=float)
    re = np.asarray(re, dtype=float)
    if np.any(rd < 0) or np.any(re < 0):
        raise DomainError("rates must be nonnegative")
    _check_tau(tau)
    A, D, U = conv_cir_ADU(m, tau)
    if np.ndim(tau) == 0:
        A, D, U = A[0], D[0], U[0]
    else:
        A, D, U = (x.reshape(np.shape(tau)) for x in (A, D, U))
    res = A - D * rd - U * re
    return res if np.ndim(res) else float(res)


def conv_cir_price(m: ConvergenceModel, rd, re, tau):
    return np.exp(conv_cir_log_price(m, rd, re, tau))


def conv_zero_vol_ode(m: ConvergenceModel, tau: float):
    """ODE system with the volatility terms dropped (deterministic rates)."""
    return conv_cir_ADU(m.with_(sigma_d=0.0, sigma_e=0.0), tau)[:, 0]


# --- multi-factor CIR -------------------------------------------------------------

def multi_cir_log_price(p: MultiCIRParams, factors, tau):
    factors = np.asarray(factors, dtype=float)
    if factors.shape[0] != len(p.factors):
        raise ValueError("need one rate per factor")
    if np.any(factors < 0):
        raise DomainError("factor values must be nonnegative")
    return sum(cir_log_price(f.risk_neutral(), x, tau) for f, x in zip(p.factors, factors))


def multi_cir_price(p: MultiCIRParams, factors, tau):
    return np.exp(multi_cir_log_price(p, factors, tau))
