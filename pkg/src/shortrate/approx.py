"""Analytical bond-price approximations and their error corrections.

All functions return ln P. The one-factor formulas take ``CKLSParams`` and the
two-factor ones ``ConvergenceModel``. At gamma = 0 every approximation goes
through the same kernels as the closed forms, so the two agree bit for bit.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np

from .kernels import (_int_B_squared, conv_A, conv_DU, expm1_over, int_expm1_over,
                      vasicek_log_price_terms)
from .models import CKLSParams, ConvergenceModel, DomainError
from .series import BivariateSeries, SeriesInR


class ApproxOrder(str, Enum):
    base = "base"
    improved = "improved"


def _as_rate(r):
    return np.asarray(r, dtype=float)


def _rpow(r, p):
    """r**p with 0**p = 0 for p > 0 and an error for p < 0 at r = 0."""
    if p == 0:
        return np.ones_like(r)
    if p < 0 and np.any(r <= 0):
        raise DomainError(f"r^{p:g} is singular at r = 0")
    return np.power(r, p)


def _check_params(p: CKLSParams, r):
    if p.beta == 0:
        raise DomainError("beta must be nonzero")
    if p.gamma > 0 and np.any(r < 0):
        raise DomainError("r must be nonnegative for gamma > 0")


# --- Choi-Wirjanto ---------------------------------------------------------------

# Taylor coefficients of [B^2(2z-1) - 2B(2tau - 3/beta) + 2tau^2 - 6tau/beta] / (8 beta^2 tau^4)
# in z = beta*tau; the closed expression cancels catastrophically for small z.
_QBRACKET_SERIES = (1 / 8, 1 / 10, 7 / 144, 1 / 56, 31 / 5760, 1 / 720, 127 / 403200,
                    17 / 266112, 73 / 6220800, 31 / 15724800, 2047 / 6706022400,
                    1 / 22809600, 8191 / 1394852659200)


def _q_bracket(beta, tau):
    """[B^2(2 beta tau - 1) - 2B(2tau - 3/beta) + 2tau^2 - 6tau/beta] / (8 beta^2)."""
    tau = np.asarray(tau, dtype=float)
    z = beta * tau
    series = tau ** 4 * np.polynomial.polynomial.polyval(z, _QBRACKET_SERIES)
    B = expm1_over(beta, tau)
    with np.errstate(all="ignore"):
        direct = (B * B * (2 * z - 1) - 2 * B * (2 * tau - 3 / beta) + 2 * tau ** 2
                  - 6 * tau / beta) / (8 * beta ** 2)
    out = np.where(np.abs(z) < 0.1, series, direct)
    return out if out.ndim else float(out)


def cw_q(p: CKLSParams, r):
    """q(r) = gamma(2gamma-1) sigma^2 r^{2(2gamma-1)} + 2 gamma r^{2gamma-1}(alpha + beta r)."""
    r = _as_rate(r)
    g = p.gamma
    if g == 0:
        return np.zeros_like(r)
    out = 2 * g * _rpow(r, 2 * g - 1) * (p.alpha + p.beta * r)
    if g != 0.5:
        out = out + g * (2 * g - 1) * p.sigma ** 2 * _rpow(r, 2 * (2 * g - 1))
    return out


def cw_price(p: CKLSParams, r, tau):
    """Choi-Wirjanto log-price approximation (error of order tau^5)."""
    r = _as_rate(r)
    _check_params(p, r)
    s2 = p.sigma ** 2
    base = vasicek_log_price_terms(p.alpha, p.beta, s2 * _rpow(r, 2 * p.gamma), r, tau)
    if p.gamma == 0:
        return base
    q = cw_q(p, r)
    tau = np.asarray(tau, dtype=float)
    # (sigma^2/(4 beta))[B^2 + 2(tau - B)/beta] is half the integral of B^2
    return base + q * s2 * (0.5 * tau * _int_B_squared(p.beta, tau) - _q_bracket(p.beta, tau))


def _powsum(terms):
    # a list, not a dict: distinct formula terms may share a power and must add
    return SeriesInR([((p, 0), c) for p, c in terms])


@lru_cache(maxsize=256)
def cw_correction_series(p: CKLSParams) -> tuple[SeriesInR, SeriesInR, SeriesInR]:
    """c5, k5 and c6 of the Choi-Wirjanto error expansion as power sums in r."""
    a, b, s2, g = p.alpha, p.beta, p.sigma ** 2, p.gamma
    s4 = s2 * s2
    c5 = _powsum([
        (2 * g - 2, 2 * a * a * (2 * g - 1)),
        (2 * g, 4 * b * b * g),
        (4 * g - 1, -8 * s2),
        (4 * g - 2, 2 * b * (1 - 5 * g + 6 * g * g) * s2),
        (6 * g - 4, s4 * (2 * g - 1) ** 2 * (4 * g - 3)),
        (2 * g - 1, 2 * a * b * (4 * g - 1)),
        (4 * g - 3, 2 * a * (2 * g - 1) * (3 * g - 2) * s2),
    ]) * (-g * s2 / 120.0)
    k5 = _powsum([
        (2 * g - 2, 6 * a * a * b * (2 * g - 1)),
        (2 * g, 12 * b ** 3 * g),
        (6 * g - 3, -10 * (1 - 2 * g) ** 2 * s4),
        (4 * g - 2, 6 * b * b * s2 * (1 - 5 * g + 6 * g * g)),
        (4 * g - 1, -10 * b * s2 * (5 + 2 * g)),
        (6 * g - 4, 3 * b * s4 * (1 - 2 * g) ** 2 * (4 * g - 3)),
        (2 * g - 1, 6 * a * b * b * (4 * g - 1)),
        (4 * g - 3, 6 * a * b * (2 - 7 * g + 6 * g * g) * s2),
        (4 * g - 2, -10 * a * (2 * g - 1) * s2),
    ]) * (g * s2 / 120.0)
    d1 = c5.diff()
    var = SeriesInR.monomial(s2, 2 * g)
    drift = SeriesInR({(0.0, 0): a, (1.0, 0): b})
    c6 = (var * 0.5 * d1.diff() + drift * d1 - k5) / 6.0
    return c5, k5, c6


def cw_ap2_price(p: CKLSParams, r, tau):
    """Improved Choi-Wirjanto approximation, ln P^ap - c5 tau^5 - c6 tau^6."""
    r = _as_rate(r)
    base = cw_price(p, r, tau)
    if p.gamma == 0:
        return base
    c5, _, c6 = cw_correction_series(p)
    tau = np.asarray(tau, dtype=float)
    return base - c5(r) * tau ** 5 - c6(r) * tau ** 6


# --- Vasicek substitution ------------------------------------------------------------

def vas_subst_price(p: CKLSParams, r, tau):
    """Vasicek log-price with sigma^2 replaced by sigma^2 r^{2 gamma} (error tau^4)."""
    r = _as_rate(r)
    _check_params(p, r)
    return vasicek_log_price_terms(p.alpha, p.beta, p.sigma ** 2 * _rpow(r, 2 * p.gamma), r, tau)


def vas_subst_linear_terms(beta: float, gamma: float, r, tau):
    """(c0, c1, c2) with ln P^ap = c0 + c1 alpha + c2 sigma^2."""
    r = _as_rate(r)
    c0 = -expm1_over(beta, tau) * r
    c1 = -int_expm1_over(beta, tau)
    c2 = 0.5 * _rpow(r, 2 * gamma) * _int_B_squared(beta, tau)
    return c0, c1, c2


def vas_subst_c4(p: CKLSParams):
    """Leading error coefficient c4(r) of the substitution approximation."""
    a, b, s2, g = p.alpha, p.beta, p.sigma ** 2, p.gamma
    return _powsum([
        (2 * g - 1, 2 * a),
        (2 * g, 2 * b),
        (4 * g - 2, (2 * g - 1) * s2),
    ]) * (-g * s2 / 24.0)


# --- convergence model ------------------------------------------------------------

def _check_conv(m: ConvergenceModel, rd, re):
    if m.a2 == m.b2:
        raise DomainError("a2 == b2 is excluded")
    if m.a2 == 0 or m.b2 == 0:
        raise DomainError("a2 and b2 must be nonzero")
    if (m.gamma_d > 0 and np.any(rd < 0)) or (m.gamma_e > 0 and np.any(re < 0)):
        raise DomainError("rates must be nonnegative for positive volatility exponents")


def conv_approx_price(m: ConvergenceModel, rd, re, tau):
    """Convergence-Vasicek log-price with state-frozen volatilities (error tau^4)."""
    rd, re = _as_rate(rd), _as_rate(re)
    _check_conv(m, rd, re)
    sd = m.sigma_d * _rpow(rd, m.gamma_d)
    se = m.sigma_e * _rpow(re, m.gamma_e)
    vd = m.sigma_d ** 2 * _rpow(rd, 2 * m.gamma_d)
    ve = m.sigma_e ** 2 * _rpow(re, 2 * m.gamma_e)
    cde = m.rho * sd * se
    D, U = conv_DU(m.a2, m.a3, m.b2, tau)
    A = conv_A(m.a1, m.a2, m.a3, m.b1, m.b2, vd, ve, cde, tau)
    return A - D * rd - U * re


def conv_c4_series(m: ConvergenceModel) -> BivariateSeries:
    gd, sd2 = m.gamma_d, m.sigma_d ** 2
    return BivariateSeries([
        ((2 * gd - 1, 0.0), 2 * m.a1),
        ((2 * gd, 0.0), 2 * m.a2),
        ((2 * gd - 1, 1.0), 2 * m.a3),
        ((4 * gd - 2, 0.0), (2 * gd - 1) * sd2),
    ]) * (-sd2 * gd / 24.0)


def conv_k3_series(m: ConvergenceModel) -> BivariateSeries:
    return conv_c4_series(m) * -4.0


def conv_k4_series(m: ConvergenceModel) -> BivariateSeries:
    """tau^4 coefficient of the PDE residual of the approximation, as printed.

    The bracket is multiplied by (1/48) re^{-2} rd^{gd-2} sigma_d.
    """
    a1, a2, a3, b1, b2 = m.a1, m.a2, m.a3, m.b1, m.b2
    sd, se, gd, ge, rho = m.sigma_d, m.sigma_e, m.gamma_d, m.gamma_e, m.rho
    t = [
        ((2 + gd, 2.0), 12 * a2 ** 2 * gd * sd),
        ((1 + 3 * gd, 2.0), -16 * gd * sd ** 3),
        ((2.0, 1 + ge), 6 * a3 * b1 * ge * rho * se),
        ((2.0, 2 + ge), 6 * a3 * b2 * ge * rho * se),
        ((1.0, 3 + ge), 6 * a3 ** 2 * gd * rho * se),
        ((2 * gd, 2 + ge), -3 * a3 * gd * rho * sd ** 2 * se),
        ((2 * gd, 2 + ge), 3 * a3 * gd ** 2 * rho * sd ** 2 * se),
        ((1 + gd, 1 + 2 * ge), 6 * a3 * gd * ge * rho ** 2 * sd * se ** 2),
        ((2.0, 3 * ge), -3 * a3 * ge * rho * se ** 3),
        ((2.0, 3 * ge), 3 * a3 * ge ** 2 * rho * se ** 3),
        # 6 a1 gd rd re^2 (2 a2 rd^gd sd + a3 re^ge rho se)
        ((1 + gd, 2.0), 12 * a1 * a2 * gd * sd),
        ((1.0, 2 + ge), 6 * a1 * a3 * gd * rho * se),
        # 6 a2 gd re^2 ((2gd-1) rd^{3gd} sd^3 + a3 rd (2 rd^gd re sd + rd re^ge rho se))
        ((3 * gd, 2.0), 6 * a2 * gd * (2 * gd - 1) * sd ** 3),
        ((1 + gd, 3.0), 12 * a2 * a3 * gd * sd),
        ((2.0, 2 + ge), 6 * a2 * a3 * gd * rho * se),
    ]
    bracket = BivariateSeries(t)
    return bracket * BivariateSeries.monomial(sd / 48.0, gd - 2.0, -2.0)


# Weight of the mixed second derivative of c4 in the c5 relation. The generator of
# the pricing PDE carries the covariance with weight 1; the published relation
# prints 4. Both only matter for rho != 0 and gamma_d > 0.
CROSS_WEIGHT = 1.0


@lru_cache(maxsize=256)
def conv_correction_series(m: ConvergenceModel, cross_weight: float = CROSS_WEIGHT):
    """c4 and c5 as bivariate power sums; c5 = (L[c4] - k4)/5."""
    c4 = conv_c4_series(m)
    mu_d = BivariateSeries({(0.0, 0.0): m.a1, (1.0, 0.0): m.a2, (0.0, 1.0): m.a3})
    mu_e = BivariateSeries({(0.0, 0.0): m.b1, (0.0, 1.0): m.b2})
    vd = BivariateSeries.monomial(m.sigma_d ** 2, 2 * m.gamma_d, 0.0)
    ve = BivariateSeries.monomial(m.sigma_e ** 2, 0.0, 2 * m.gamma_e)
    cov = BivariateSeries.monomial(m.rho * m.sigma_d * m.sigma_e, m.gamma_d, m.gamma_e)
    d_d, d_e = c4.diff(0), c4.diff(1)
    L = (mu_d * d_d + mu_e * d_e + vd * 0.5 * d_d.diff(0) + ve * 0.5 * d_e.diff(1)
         + cov * cross_weight * d_d.diff(1))
    c5 = (L - conv_k4_series(m)) / 5.0
    return c4, c5


def conv_correction_coeffs(m: ConvergenceModel, rd, re, cross_weight: float = CROSS_WEIGHT):
    """Values (c4, c5) of the convergence-approximation error expansion at (rd, re)."""
    rd, re = _as_rate(rd), _as_rate(re)
    if np.any(rd <= 0) or np.any(re <= 0):
        raise DomainError("correction coefficients need rd > 0 and re > 0")
    c4, c5 = conv_correction_series(m, cross_weight)
    return c4(rd, re), c5(rd, re)


def conv_ap2_price(m: ConvergenceModel, rd, re, tau, cross_weight: float = CROSS_WEIGHT):
    """ln P^ap - c4 tau^4 - c5 tau^5 (error of order tau^6)."""
    base = conv_approx_price(m, rd, re, tau)
    if m.gamma_d == 0:
        return base
    c4, c5 = conv_correction_coeffs(m, rd, re, cross_weight)
    tau = np.asarray(tau, dtype=float)
    return base - c4 * tau ** 4 - c5 * tau ** 5


def approx_log_price(p: CKLSParams, r, tau, method: str = "cw", order: ApproxOrder | str = "base"):
    """Dispatch helper used by calibration and the CLI."""
    order = ApproxOrder(order)
    if method == "cw":
        return cw_ap2_price(p, r, tau) if order is ApproxOrder.improved else cw_price(p, r, tau)
    if method == "vas_subst":
        if order is ApproxOrder.improved:
            raise ValueError("no improved variant of the substitution formula")
        return vas_subst_price(p, r, tau)
    raise ValueError(f"unknown approximation {method!r}")
