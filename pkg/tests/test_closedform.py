import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from shortrate.closedform import (cir_log_price, cir_price, cir_riccati_ode, conv_cir_log_price, conv_cir_price,
                                  conv_vasicek_log_price, conv_vasicek_price, conv_vasicek_solution,
                                  multi_cir_log_price, multi_cir_price, vasicek_log_price, vasicek_price,
                                  vasicek_price_real)
from shortrate.models import (CIRFactor, DomainError, MultiCIRParams, VasicekRealParams, cir, to_risk_neutral,
                              vasicek)
from shortrate.simulate import SimConfig, simulate_paths_2f

from conftest import ulp_close


def test_zero_maturity_is_par(vas3, cir3, conv9):
    r = np.linspace(0, 0.1, 5)
    np.testing.assert_array_equal(vasicek_price(vas3, r, 0.0), 1.0)
    np.testing.assert_array_equal(cir_price(cir3, r, 0.0), 1.0)
    assert conv_cir_price(conv9, 0.02, 0.01, 0.0) == 1.0
    m0 = conv9.with_(gamma_d=0.0, gamma_e=0.0)
    assert conv_vasicek_price(m0, 0.02, 0.01, 0.0) == 1.0
    sol = conv_vasicek_solution(m0)
    assert sol.A(0.0) == 0.0 and sol.B(0.0) == 0.0 and sol.U(0.0) == 0.0


def test_negative_maturity_rejected(vas3):
    with pytest.raises(DomainError):
        vasicek_price(vas3, 0.04, -1.0)


def test_vasicek_matches_real_parametrisation():
    real = VasicekRealParams(0.1779, 0.0154 / 0.1779, 0.02, 0.0)
    p = to_risk_neutral(real)
    r = np.linspace(-0.02, 0.12, 10)[:, None]
    tau = np.linspace(0.1, 10.0, 10)[None, :]
    assert ulp_close(vasicek_price(p, r, tau), vasicek_price_real(real, r, tau), n=64)


@given(st.floats(0.05, 3.0), st.floats(0.0, 0.1), st.floats(0.001, 0.1), st.floats(-0.5, 0.5),
       st.floats(-0.05, 0.2), st.floats(0.01, 20.0))
def test_vasicek_real_with_price_of_risk(kappa, theta, sigma, lam, r, tau):
    real = VasicekRealParams(kappa, theta, sigma, lam)
    assert vasicek_price(to_risk_neutral(real), r, tau) == pytest.approx(vasicek_price_real(real, r, tau),
                                                                          rel=1e-12)


def test_cir_matches_riccati_ode(cir3):
    for tau in (0.25, 1.0, 7.5):
        lnA, B = cir_riccati_ode(cir3, tau)
        assert cir_log_price(cir3, 0.04, tau) == pytest.approx(lnA - B * 0.04, rel=1e-11)


def test_cir_small_sigma_limit():
    det = vasicek(0.00315, -0.0555, 0.0)
    tau = np.array([0.5, 2.0, 10.0])
    np.testing.assert_allclose(cir_price(cir(0.00315, -0.0555, 1e-6), 0.04, tau),
                               vasicek_price(det, 0.04, tau), atol=1e-8)


def test_cir_domain(cir3):
    with pytest.raises(DomainError):
        cir_price(cir3, -0.01, 1.0)
    with pytest.raises(DomainError):
        cir_price(vasicek(0.01, -0.1, 0.1), 0.01, 1.0)


def test_conv_vasicek_decouples_when_a3_zero(conv9):
    m = conv9.with_(a3=0.0, gamma_d=0.0, gamma_e=0.0, rho=0.3)
    rd = np.linspace(-0.01, 0.05, 7)
    one = vasicek(m.a1, m.a2, m.sigma_d)
    for tau in (0.5, 3.0, 12.0):
        np.testing.assert_allclose(conv_vasicek_log_price(m, rd, 0.02, tau), vasicek_log_price(one, rd, tau),
                                   rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("rho", [0.0, 0.2, -0.6])
def test_conv_vasicek_A_matches_quadrature(conv9, rho):
    m = conv9.with_(gamma_d=0.0, gamma_e=0.0, rho=rho)
    sol = conv_vasicek_solution(m)
    vd, ve, cde = m.sigma_d ** 2, m.sigma_e ** 2, rho * m.sigma_d * m.sigma_e

    def integrand(s):
        D, U = sol.B(s), sol.U(s)
        return -m.a1 * D - m.b1 * U + 0.5 * vd * D * D + 0.5 * ve * U * U + cde * D * U

    for tau in (0.25, 1.0, 10.0, 30.0):
        ref = quad(integrand, 0.0, tau, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        assert float(sol.A(tau)) == pytest.approx(ref, abs=1e-12)


def test_conv_cir_table_yields(conv9):
    y = lambda tau: -conv_cir_log_price(conv9, 0.017, 0.01, tau) / tau * 100  # noqa: E731
    assert round(y(0.25), 5) == 1.63257
    assert round(y(30.0), 5) == 1.78751


def test_conv_cir_zero_vol_matches_vasicek(conv9):
    m = conv9.with_(sigma_d=0.0, sigma_e=0.0)
    mv = m.with_(gamma_d=0.0, gamma_e=0.0)
    for tau in (0.25, 2.0, 20.0):
        assert conv_cir_log_price(m, 0.017, 0.01, tau) == pytest.approx(
            float(conv_vasicek_log_price(mv, 0.017, 0.01, tau)), abs=1e-10)


def test_conv_cir_vectorised(conv9):
    rd = np.array([0.0, 0.01, 0.03])
    taus = np.array([0.5, 1.0])
    grid = conv_cir_log_price(conv9, rd[:, None], 0.01, taus[None, :])
    for i, r in enumerate(rd):
        for j, t in enumerate(taus):
            assert grid[i, j] == pytest.approx(conv_cir_log_price(conv9, r, 0.01, t), rel=1e-14)
    with pytest.raises(DomainError):
        conv_cir_log_price(conv9.with_(rho=0.1), 0.01, 0.01, 1.0)


FIG6 = MultiCIRParams((CIRFactor(0.7298, 0.04013, 0.16885), CIRFactor(0.021185, 0.022543, 0.054415)))


def test_multi_cir_single_factor_is_cir():
    f = CIRFactor(0.7298, 0.04013, 0.16885)
    p = MultiCIRParams((f,))
    tau = np.array([0.1, 1.0, 5.0])
    np.testing.assert_array_equal(multi_cir_log_price(p, [0.03], tau), cir_log_price(f.risk_neutral(), 0.03, tau))


def test_multi_cir_zero_factor_defined():
    P = multi_cir_price(FIG6, [0.0, 0.0], 2.0)
    assert 0 < P < 1


def test_multi_cir_against_monte_carlo():
    cfg = SimConfig(dt=0.005, n_steps=200, seed=11)
    x = simulate_paths_2f(FIG6, (0.04013, 0.022543), cfg, n_paths=100_000)
    r = x.sum(axis=0)
    disc = np.exp(-cfg.dt * r[:, :-1].sum(axis=1))
    mean, se = disc.mean(), disc.std(ddof=1) / math.sqrt(disc.size)
    exact = multi_cir_price(FIG6, [0.04013, 0.022543], 1.0)
    assert abs(mean - exact) < 3 * se
