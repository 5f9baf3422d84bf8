"""Independent reference computations used only by the tests."""

from __future__ import annotations

import numpy as np

from shortrate.series import BivariateSeries, convergence_log_coeffs


def frozen_vol_log_coeffs(m, J):
    """Taylor coefficients of the frozen-volatility approximation ln P^ap.

    D, U, A solve D' = 1 + a2 D, U' = a3 D + b2 U,
    A' = -a1 D - b1 U + vd D^2/2 + ve U^2/2 + cov D U with state-dependent
    constants vd, ve, cov, all expanded as power series in tau.
    """
    vd = BivariateSeries.monomial(m.sigma_d ** 2, 2 * m.gamma_d, 0.0)
    ve = BivariateSeries.monomial(m.sigma_e ** 2, 0.0, 2 * m.gamma_e)
    cov = BivariateSeries.monomial(m.rho * m.sigma_d * m.sigma_e, m.gamma_d, m.gamma_e)
    D = [0.0] * (J + 1)
    U = [0.0] * (J + 1)
    A = [BivariateSeries()] * (J + 1)
    for n in range(J):
        D[n + 1] = ((1.0 if n == 0 else 0.0) + m.a2 * D[n]) / (n + 1)
        U[n + 1] = (m.a3 * D[n] + m.b2 * U[n]) / (n + 1)
        dd = sum(D[i] * D[n - i] for i in range(n + 1))
        uu = sum(U[i] * U[n - i] for i in range(n + 1))
        du = sum(D[i] * U[n - i] for i in range(n + 1))
        A[n + 1] = (BivariateSeries.const(-m.a1 * D[n] - m.b1 * U[n]) + vd * (0.5 * dd)
                    + ve * (0.5 * uu) + cov * du) / (n + 1)
    rd = BivariateSeries.monomial(1.0, 1.0, 0.0)
    re = BivariateSeries.monomial(1.0, 0.0, 1.0)
    return [A[n] - rd * D[n] - re * U[n] for n in range(J + 1)]


def convergence_error_coeffs(m, J=5):
    """g_n of ln P^ap - ln P^ex = sum g_n tau^n, from the two Taylor expansions."""
    ap = frozen_vol_log_coeffs(m, J)
    ex = convergence_log_coeffs(m, J)
    return [a - e for a, e in zip(ap, ex)]


def power_fit_slope(taus, errs):
    """Least-squares slope of log|err| against log tau."""
    return float(np.polyfit(np.log(taus), np.log(np.abs(errs)), 1)[0])


def log_pde_residual_coeffs(m, J=5):
    """tau-coefficients of L[f] - f_tau for f = ln P^ap of the convergence model.

    L is the log-price generator with the -rd source term; the coefficients of
    f come from frozen_vol_log_coeffs, so everything stays exact in (rd, re).
    """
    f = frozen_vol_log_coeffs(m, J + 1)
    mu_d = BivariateSeries({(0.0, 0.0): m.a1, (1.0, 0.0): m.a2, (0.0, 1.0): m.a3})
    mu_e = BivariateSeries({(0.0, 0.0): m.b1, (0.0, 1.0): m.b2})
    vd = BivariateSeries.monomial(m.sigma_d ** 2, 2 * m.gamma_d, 0.0)
    ve = BivariateSeries.monomial(m.sigma_e ** 2, 0.0, 2 * m.gamma_e)
    cov = BivariateSeries.monomial(m.rho * m.sigma_d * m.sigma_e, m.gamma_d, m.gamma_e)
    fd = [a.diff(0) for a in f]
    fe = [a.diff(1) for a in f]
    out = []
    for n in range(J + 1):
        sdd = sum((fd[i] * fd[n - i] for i in range(n + 1)), BivariateSeries())
        see = sum((fe[i] * fe[n - i] for i in range(n + 1)), BivariateSeries())
        sde = sum((fd[i] * fe[n - i] for i in range(n + 1)), BivariateSeries())
        Lf = (mu_d * fd[n] + mu_e * fe[n] + vd * 0.5 * (fd[n].diff(0) + sdd)
              + ve * 0.5 * (fe[n].diff(1) + see) + cov * (fd[n].diff(1) + sde))
        if n == 0:
            Lf = Lf - BivariateSeries.monomial(1.0, 1.0, 0.0)
        out.append(Lf - f[n + 1] * (n + 1))
    return out
