"""Cancellation-safe exponential kernels shared by closed forms and approximations.

Everything here evaluates integrals of products of (e^{a s} - 1)/a type
functions. Below ``SMALL`` the divided differences switch to truncated series.
"""

from __future__ import annotations

import numpy as np

SMALL = 1e-8


def expm1_over(x, tau):
    """(e^{x tau} - 1)/x, equal to tau as x -> 0."""
    tau = np.asarray(tau, dtype=float)
    if abs(x) < SMALL:
        xt = x * tau
        return tau * (1.0 + xt / 2.0 + xt * xt / 6.0 + xt ** 3 / 24.0)
    return np.expm1(x * tau) / x


def int_expm1_over(x, tau):
    """Integral over [0, tau] of (e^{x s} - 1)/x ds = ((e^{x tau}-1)/x - tau)/x."""
    tau = np.asarray(tau, dtype=float)
    if abs(x) < SMALL:
        xt = x * tau
        return tau ** 2 * (0.5 + xt / 6.0 + xt * xt / 24.0 + xt ** 3 / 120.0)
    # expm1(z) - z loses digits for small z; use series there
    z = x * tau
    small = np.abs(z) < 1e-3
    out = np.where(small, tau ** 2 * (0.5 + z / 6.0 + z * z / 24.0 + z ** 3 / 120.0 + z ** 4 / 720.0),
                   (np.expm1(z) - z) / (x * x))
    return out if np.ndim(out) else float(out)


def _e_int(c, tau):
    """Integral over [0, tau] of e^{c s}."""
    return expm1_over(c, tau)


def int_exp_combo(terms, tau):
    """Integral over [0, tau] of sum_k w_k e^{c_k s} given terms [(w_k, c_k)].

    Exponents that coincide are merged first so nothing divides by zero.
    """
    merged: dict[float, float] = {}
    for w, c in terms:
        key = round(c, 14)
        merged[key] = merged.get(key, 0.0) + w
    return sum(w * _e_int(c, tau) for c, w in merged.items())


def vasicek_log_price_terms(alpha, beta, var, r, tau):
    """ln P for constant-volatility linear drift, with variance var = sigma^2.

    Written through the divided differences so beta -> 0 is handled.
    """
    B = expm1_over(beta, tau)            # (e^{beta tau} - 1)/beta = -(1 - e^{beta tau})/beta
    intB = int_expm1_over(beta, tau)     # (B - tau)/beta
    # int_0^tau B(s)^2 ds
    intB2 = _int_B_squared(beta, tau)
    return -alpha * intB + 0.5 * var * intB2 - B * r


def _int_B_squared(beta, tau):
    if abs(beta) < SMALL:
        bt = beta * tau
        return tau ** 3 / 3.0 * (1.0 + 0.75 * bt + 7.0 / 20.0 * bt * bt)
    tau = np.asarray(tau, dtype=float)
    z = beta * tau
    small = np.abs(z) < 1e-2
    # (e^{2z} - 4 e^{z} + 2z + 3) / (2 beta^3), series for small z
    series = tau ** 3 * (1.0 / 3.0 + z / 4.0 + 7.0 * z * z / 60.0 + z ** 3 / 24.0 + 31.0 * z ** 4 / 2520.0
                         + z ** 5 / 320.0)
    exact = (np.expm1(2 * z) - 4 * np.expm1(z) + 2 * z) / (2.0 * beta ** 3)
    out = np.where(small, series, exact)
    return out if np.ndim(out) else float(out)


def conv_DU(a2, a3, b2, tau):
    """Loadings D(tau) on r_d and U(tau) on r_e of the affine convergence price."""
    D = expm1_over(a2, tau)
    if abs(a2 - b2) < SMALL:
        raise ValueError("a2 == b2 is not supported")
    # U = a3 (D_a2 - D_b2)/(a2 - b2)
    U = a3 * (expm1_over(a2, tau) - expm1_over(b2, tau)) / (a2 - b2)
    return D, U


def conv_A_parts(a1, a2, a3, b1, b2, tau):
    """Pieces of A(tau) that do not depend on the volatilities.

    Returns (A0, Idd, Iee, Ide) with A0 = int(-a1 D - b1 U), Idd = int D^2,
    Iee = int U^2 and Ide = int D U over [0, tau]. With
    D = (e^{a2 s}-1)/a2 and U = a3 (e^{a2 s}/a2 - e^{b2 s}/b2 + 1/b2 - 1/a2)/(a2 - b2)
    every integrand is a combination of exponentials integrated exactly.
    """
    if abs(a2 - b2) < SMALL:
        raise ValueError("a2 == b2 is not supported")
    tau = np.asarray(tau, dtype=float)
    if abs(a2) < SMALL or abs(b2) < SMALL:
        return _conv_parts_gl(a1, a2, a3, b1, b2, tau)
    # D = dA e^{a2 s} + d0;  U = uA e^{a2 s} + uB e^{b2 s} + u0
    k = a3 / (a2 - b2)
    D = {a2: 1.0 / a2, 0.0: -1.0 / a2}
    U = {a2: k / a2, b2: -k / b2, 0.0: k * (1.0 / b2 - 1.0 / a2)}

    def lin(p, w):
        return [(w * c, e) for e, c in p.items()]

    def prod(p, q):
        return [(c1 * c2, e1 + e2) for e1, c1 in p.items() for e2, c2 in q.items()]

    parts = [int_exp_combo(lin(D, -a1) + lin(U, -b1), tau), int_exp_combo(prod(D, D), tau),
             int_exp_combo(prod(U, U), tau), int_exp_combo(prod(D, U), tau)]
    # the constant pieces cancel heavily for small tau; integrate directly there
    small = (abs(a2) + abs(b2)) * tau < 5e-2
    if np.any(small):
        gl = _conv_parts_gl(a1, a2, a3, b1, b2, tau)
        parts = [np.where(small, g, x) for g, x in zip(gl, parts)]
    return tuple(x if np.ndim(x) else float(x) for x in parts)


def conv_A(a1, a2, a3, b1, b2, vd, ve, cde, tau):
    """A(tau) = int_0^tau [-a1 D - b1 U + vd D^2/2 + ve U^2/2 + cde D U] ds.

    vd, ve are the (possibly state-frozen) variances and cde the covariance
    term; they may be arrays broadcastable against tau.
    """
    A0, Idd, Iee, Ide = conv_A_parts(a1, a2, a3, b1, b2, tau)
    return A0 + 0.5 * vd * Idd + 0.5 * ve * Iee + cde * Ide


def _conv_parts_gl(a1, a2, a3, b1, b2, tau, nodes=40):
    """Gauss-Legendre evaluation of the pieces of A(tau).

    The integrands are entire functions whose exponents stay moderate where
    this path is taken, so a fixed rule is accurate to rounding.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    out = np.zeros((4, taus.size))
    for i, t in enumerate(taus):
        s = 0.5 * t * (x + 1.0)
        D, U = conv_DU(a2, a3, b2, s)
        for j, f in enumerate((-a1 * D - b1 * U, D * D, U * U, D * U)):
            out[j, i] = 0.5 * t * np.dot(w, f)
    return tuple(o.reshape(np.shape(tau)) if np.ndim(tau) else float(o[0]) for o in out)
