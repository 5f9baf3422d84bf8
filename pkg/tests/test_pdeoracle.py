import csv

import numpy as np
import pytest

from shortrate.approx import conv_approx_price, conv_k3_series
from shortrate.closedform import cir_price, conv_cir_price, conv_vasicek_price, vasicek_price
from shortrate.models import BlackKarasinskiParams, DomainError, cir
from shortrate.pdeoracle import (Grid1D, Grid2D, PDEInstabilityError, _check_range, _fichera, log_residual_2f,
                                 solve_pde_1f, solve_pde_2f)

TAUS = [0.25, 0.5, 1.0, 2.0, 5.0]


@pytest.fixture(scope="module")
def vas_sol():
    from shortrate.models import vasicek
    p = vasicek(0.00315, -0.0555, 0.0894)
    return p, solve_pde_1f(p, Grid1D(-1.0, 1.5, 2000, 2000, 5.0))


@pytest.fixture(scope="module")
def cir_sol():
    p = cir(0.00315, -0.0555, 0.0894)
    return p, solve_pde_1f(p, Grid1D(0.0, 1.5, 2000, 2000, 5.0))


def _yield_err(sol, exact, r, tau):
    return np.max(np.abs(sol.yield_(tau, r) + np.log(exact(r, tau)) / tau))


def test_vasicek_yields(vas_sol):
    p, sol = vas_sol
    r = np.linspace(0.0, 0.1, 11)
    for tau in TAUS:
        assert _yield_err(sol, lambda x, t: vasicek_price(p, x, t), r, tau) < 1e-5
    assert sol.price(1.0, 0.04) == pytest.approx(float(vasicek_price(p, 0.04, 1.0)), rel=1e-6)


def test_cir_yields(cir_sol):
    p, sol = cir_sol
    r = np.linspace(0.0, 0.1, 11)
    for tau in TAUS:
        assert _yield_err(sol, lambda x, t: cir_price(p, x, t), r, tau) < 1e-5


def test_initial_slice_and_bounds(cir_sol):
    _, sol = cir_sol
    assert np.all(sol.P[0] == 1.0)
    assert sol.P.min() > 0 and sol.P.max() <= 1.0


def test_boundary_metadata(cir_sol):
    _, sol = cir_sol
    assert sol.meta["condition_needed"] is False
    assert sol.meta["drift_at_boundary"] == pytest.approx(0.00315)
    assert "no imposed value" in sol.meta["boundary"]
    assert _fichera(-0.001, 0.005)["condition_needed"] is True


@pytest.mark.parametrize("lo,hi,exact", [(0.0, 1.6, cir_price), (-0.8, 0.8, vasicek_price)])
def test_second_order_refinement(lo, hi, exact):
    p = cir(0.00315, -0.0555, 0.0894)
    if exact is vasicek_price:
        p = p.with_(gamma=0.0)
    errs = []
    for n, nt in ((201, 50), (401, 100)):
        s = solve_pde_1f(p, Grid1D(lo, hi, n, nt, 1.0))
        r = s.axes[0]
        sel = (r >= 0) & (r <= 0.2)
        errs.append(np.max(np.abs(s.P[-1][sel] - exact(p, r[sel], 1.0))))
    assert 4 / 1.5 < errs[0] / errs[1] < 4 * 1.5


def test_black_karasinski_grid_and_domain():
    bk = BlackKarasinskiParams(0.1, np.log(0.04), 0.85)
    with pytest.raises(DomainError):
        solve_pde_1f(bk, Grid1D(0.0, 1.0, 100, 10, 1.0))
    with pytest.raises(DomainError):
        solve_pde_1f(cir(0.01, -0.1, 0.1), Grid1D(-0.1, 1.0, 100, 10, 1.0))


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid1D(0.0, 1.0, 10, 10, 1.0)
    with pytest.raises(ValueError):
        Grid2D(0.0, 1.0, 0.0, 1.0, 20, 8, 10, 1.0)


def test_instability_is_reported():
    with pytest.raises(PDEInstabilityError, match="grid"):
        _check_range(np.array([[1.0, -0.5]]), 0.0, 1.0, "test grid")


def test_conv_vasicek_correlated(conv9):
    m = conv9.with_(gamma_d=0.0, gamma_e=0.0, rho=0.2)
    taus = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0]
    sol = solve_pde_2f(m, Grid2D(-0.3, 0.35, -0.3, 0.35, 80, 80, 1000, 10.0), save_taus=taus)
    for tau in taus:
        ref = -np.log(conv_vasicek_price(m, 0.017, 0.01, tau)) / tau
        assert abs(sol.yield_(tau, 0.017, 0.01) - ref) < 5e-6


@pytest.fixture(scope="module")
def conv_cir_sol():
    from shortrate.models import ConvergenceModel
    m = ConvergenceModel(0.0075, -2.0, 2.0, 0.003, -0.2, 0.03, 0.01, 0.5, 0.5, 0.0)
    return m, solve_pde_2f(m, Grid2D(0.0, 0.3, 0.0, 0.3, 80, 80, 500, 5.0), save_taus=TAUS)


def test_conv_cir(conv_cir_sol):
    m, sol = conv_cir_sol
    for tau in TAUS:
        ref = -np.log(conv_cir_price(m, 0.017, 0.01, tau)) / tau
        assert abs(sol.yield_(tau, 0.017, 0.01) - ref) < 5e-6
    assert sol.meta["rd0"]["condition_needed"] is False
    assert np.all(sol.P[0] == 1.0) and sol.P.min() > 0 and sol.P.max() <= 1.0


def test_correlation_barely_moves_yields(conv_cir_sol):
    m, sol = conv_cir_sol
    corr = solve_pde_2f(m.with_(rho=0.5), Grid2D(0.0, 0.3, 0.0, 0.3, 80, 80, 100, 1.0), save_taus=[1.0])
    assert abs(corr.yield_(1.0, 0.017, 0.01) - sol.yield_(1.0, 0.017, 0.01)) < 1e-3


def test_two_factor_checks(conv9):
    with pytest.raises(DomainError):
        solve_pde_2f(conv9, Grid2D(-0.1, 0.3, 0.0, 0.3, 20, 20, 10, 1.0))
    with pytest.raises(TypeError):
        solve_pde_2f(cir(0.01, -0.1, 0.1), Grid2D(0.0, 0.3, 0.0, 0.3, 20, 20, 10, 1.0))
    with pytest.raises(ValueError):
        solve_pde_2f(conv9, Grid2D(0.0, 0.3, 0.0, 0.3, 20, 20, 10, 1.0), save_taus=[2.0])


def test_residual_of_approximation_is_cubic(conv9):
    taus = np.geomspace(0.002, 0.02, 8)
    f = lambda a, b, t: conv_approx_price(conv9, a, b, t)  # noqa: E731
    res = np.array([log_residual_2f(conv9, f, 0.02, 0.02, t) for t in taus])
    assert np.polyfit(np.log(taus), np.log(np.abs(res)), 1)[0] == pytest.approx(3.0, abs=0.1)
    assert res[3] / taus[3] ** 3 == pytest.approx(conv_k3_series(conv9)(0.02, 0.02), rel=0.05)


def test_csv_export(tmp_path):
    sol = solve_pde_1f(cir(0.01, -0.1, 0.1), Grid1D(0.0, 1.0, 20, 4, 1.0))
    sol.to_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["tau", "r", "P"] and len(rows) == 1 + 5 * 20
    with pytest.raises(ValueError):
        sol.price(0.3, 0.1)
