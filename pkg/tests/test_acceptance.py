"""Acceptance criteria, one verdict line per check (printed in the terminal summary)."""

import time

import numpy as np
import pytest

from shortrate import tables
from shortrate.analysis import fitted_order, grid_error_norms
from shortrate.approx import (conv_ap2_price, conv_approx_price, conv_correction_coeffs, cw_ap2_price, cw_price,
                              vas_subst_price)
from shortrate.closedform import (cir_log_price, cir_price, conv_cir_log_price, conv_cir_price,
                                  conv_vasicek_log_price, conv_vasicek_price, vasicek_log_price, vasicek_price)
from shortrate.models import ConvergenceModel, cir, vasicek
from shortrate.pdeoracle import Grid1D, Grid2D, solve_pde_1f, solve_pde_2f
from shortrate.simulate import SimConfig, mc_bond_price

from conftest import ulp_close

RESULTS = []
LIMITS = {"3": 10.0, "4": 60.0, "5": 5.0, "6": 30.0, "7": 600.0, "9": 10.0}
CONV = ConvergenceModel(0.0075, -2.0, 2.0, 0.003, -0.2, 0.03, 0.01, 0.5, 0.5, 0.0)
CIR3 = cir(0.00315, -0.0555, 0.0894)
VAS3 = vasicek(0.00315, -0.0555, 0.0894)


def record(criterion, ok, detail):
    RESULTS.append((criterion, bool(ok), detail))
    assert ok, detail


def _table(table, **kw):
    cells, sec = tables.reproduce(table, **kw)
    counted = [c for c in cells if not c.known]
    bad = [c.label for c in counted if not c.ok]
    return cells, sec, f"{len(counted) - len(bad)}/{len(counted)} cells, {sec:.1f}s (limit {LIMITS[table]:g}s)" + (
        f", failing: {bad[:3]}" if bad else "")


@pytest.mark.parametrize("criterion,table", [("1", "3"), ("2", "4"), ("3", "5"), ("4", "6"), ("6", "9")])
def test_table_reproduction(criterion, table):
    cells, sec, detail = _table(table)
    record(criterion, tables.all_pass(cells) and sec < LIMITS[table], f"Table {table}: {detail}")


def test_table7_with_monte_carlo():
    cells, sec, detail = _table("7", mc_paths=tables.TABLE7_MC_PATHS)
    assert sum("MC" in c.label for c in cells) == 3
    record("5", tables.all_pass(cells) and sec < LIMITS["7"], f"Table 7 incl. 1e6-path MC: {detail}")


@pytest.mark.xfail(strict=True, reason="captioned kappa=1 does not generate the printed values; see ledger")
@pytest.mark.parametrize("criterion,driver", [("4", tables.table6), ("5", tables.table7)])
def test_caption_kappa(criterion, driver):
    cells = driver(kappa=1.0)
    n = sum(c.ok for c in cells)
    record(criterion, tables.all_pass(cells), f"kappa=1 as captioned: {n}/{len(cells)} cells match")


@pytest.mark.xfail(strict=True, reason="two published cells repeat the neighbouring row; see ledger")
def test_table5_repeated_cells():
    cells = [c for c in tables.table5() if c.known]
    record("3", all(c.ok for c in cells), f"Table 5 duplicated cells: {[c.label for c in cells]}")


@pytest.mark.xfail(strict=True, reason="short-maturity differences below printed yield resolution; see ledger")
def test_table9_small_differences():
    cells = [c for c in tables.table9() if c.known]
    n = sum(c.ok for c in cells)
    record("6", n == len(cells), f"Table 9 short-maturity differences: {n}/{len(cells)} within 20%")


@pytest.mark.xfail(strict=True, reason="second-day caption rates do not produce the printed yields; see ledger")
def test_table9_caption_rates():
    ex, _ = tables.table9_yields(*tables.TABLE9[252]["rates"])
    err = float(np.max(np.abs(ex - np.array(tables.TABLE9[252]["exact"]))))
    record("6", err < tables.TABLE9_YIELD_TOL, f"Table 9 day 252 with caption rates: max yield error {err:.2e} pp")


# --- 7: orders of accuracy ----------------------------------------------------------

ONE_FACTOR_TAUS = [1.0, 0.75, 0.5, 0.25]
CONV_TAUS = np.geomspace(0.02, 0.1, 8)


@pytest.mark.parametrize("name,fn,order", [("CW", cw_price, 5), ("CW improved", cw_ap2_price, 7),
                                           ("Vasicek substitution", vas_subst_price, 4)])
def test_one_factor_orders(name, fn, order):
    rep = grid_error_norms(lambda r, t: fn(CIR3, r, t), lambda r, t: cir_log_price(CIR3, r, t),
                           np.linspace(0.0, 0.15, 1501), ONE_FACTOR_TAUS)
    slope = fitted_order(rep.sup, ONE_FACTOR_TAUS)
    record("7", abs(slope - order) <= 0.15, f"{name} fitted order {slope:.3f} (target {order}±0.15)")


@pytest.mark.parametrize("name,fn,order", [("convergence", conv_approx_price, 4),
                                           ("convergence improved", conv_ap2_price, 6)])
def test_convergence_orders(name, fn, order):
    rd, re = 0.017, 0.01
    errs = [abs(fn(CONV, rd, re, t) - conv_cir_log_price(CONV, rd, re, t)) for t in CONV_TAUS]
    slope = fitted_order(errs, CONV_TAUS)
    record("7", abs(slope - order) <= 0.15, f"{name} fitted order {slope:.3f} on tau in [0.02, 0.1]")


# --- 8: exactness in the constant-volatility limit -----------------------------------

R10 = np.linspace(-0.02, 0.1, 10)[:, None]
T10 = np.linspace(0.1, 20.0, 10)[None, :]


@pytest.mark.parametrize("name,fn", [("CW", cw_price), ("CW improved", cw_ap2_price),
                                     ("Vasicek substitution", vas_subst_price)])
def test_one_factor_exactness(name, fn):
    got, exact = fn(VAS3, R10, T10), vasicek_log_price(VAS3, R10, T10)
    worst = float(np.max(np.abs(got - exact) / (np.finfo(float).eps * np.abs(exact))))
    record("8", ulp_close(got, exact, 8), f"{name} vs Vasicek on 100 points: worst {worst:.1f} ulp")


@pytest.mark.parametrize("name,fn", [("convergence", conv_approx_price), ("convergence improved", conv_ap2_price)])
def test_convergence_exactness(name, fn):
    m = CONV.with_(gamma_d=0.0, gamma_e=0.0, rho=0.3)
    got, exact = fn(m, R10, 0.015, T10), conv_vasicek_log_price(m, R10, 0.015, T10)
    worst = float(np.max(np.abs(got - exact) / (np.finfo(float).eps * np.abs(exact))))
    record("8", ulp_close(got, exact, 8), f"{name} vs convergence Vasicek on 100 points: worst {worst:.1f} ulp")


# --- 9: analytic coefficients ------------------------------------------------------

def test_c4_cir_form():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(200):
        a1, a3, sd = rng.uniform(0, 0.02), rng.uniform(0, 3), rng.uniform(0.005, 0.2)
        a2 = -rng.uniform(0.1, 3)
        rd, re = rng.uniform(0.001, 0.1, 2)
        c4, _ = conv_correction_coeffs(CONV.with_(a1=a1, a2=a2, a3=a3, sigma_d=sd), rd, re)
        terms = np.array([-a2 * sd ** 2 * rd, -a1 * sd ** 2, -a3 * sd ** 2 * re]) / 24
        worst = max(worst, abs(c4 - terms.sum()) / (np.finfo(float).eps * np.abs(terms).max()))
    record("9", worst <= 8, f"c4 square-root form on 200 random parameter sets: worst {worst:.1f} ulp")


def test_cw_fifth_order_coefficient():
    a, b, s2 = CIR3.alpha, CIR3.beta, CIR3.sigma ** 2
    taus = np.linspace(0.1, 0.4, 13)
    worst = 0.0
    for r in (0.01, 0.04, 0.1):
        y = [(cw_price(CIR3, r, t) - cir_log_price(CIR3, r, t)) / t ** 5 for t in taus]
        fitted = np.polyfit(taus, y, 3)[-1]
        expected = -(1 / 120) * s2 * (a * b + r * (b * b - 4 * s2))
        worst = max(worst, abs(fitted / expected - 1))
    record("9", worst < 1e-3, f"CW tau^5 coefficient fit: worst relative error {worst:.1e}")


# --- 10: oracle agreement -------------------------------------------------------------

def _max_yield_err(sol, exact, rates, taus):
    return max(abs(sol.yield_(t, *rates) + np.log(exact(t)) / t) for t in taus)


def test_pde_one_factor():
    r = np.linspace(0.0, 0.1, 11)
    taus = [0.25, 0.5, 1.0, 2.0, 5.0]
    ev = solve_pde_1f(VAS3, Grid1D(-1.0, 1.5, 2000, 2000, 5.0))
    ec = solve_pde_1f(CIR3, Grid1D(0.0, 1.5, 2000, 2000, 5.0))
    errs = (float(np.max([np.abs(ev.yield_(t, r) + np.log(vasicek_price(VAS3, r, t)) / t) for t in taus])),
            float(np.max([np.abs(ec.yield_(t, r) + np.log(cir_price(CIR3, r, t)) / t) for t in taus])))
    record("10", max(errs) < 1e-5, f"PDE yield error Vasicek {errs[0]:.1e}, CIR {errs[1]:.1e}")


def test_pde_two_factor():
    taus = [0.25, 0.5, 1.0, 2.0, 5.0]
    mv = CONV.with_(gamma_d=0.0, gamma_e=0.0, rho=0.2)
    sv = solve_pde_2f(mv, Grid2D(-0.3, 0.35, -0.3, 0.35, 80, 80, 500, 5.0), save_taus=taus)
    sc = solve_pde_2f(CONV, Grid2D(0.0, 0.3, 0.0, 0.3, 80, 80, 500, 5.0), save_taus=taus)
    ev = _max_yield_err(sv, lambda t: conv_vasicek_price(mv, 0.017, 0.01, t), (0.017, 0.01), taus)
    ec = _max_yield_err(sc, lambda t: conv_cir_price(CONV, 0.017, 0.01, t), (0.017, 0.01), taus)
    record("10", max(ev, ec) < 1e-5, f"PDE yield error convergence Vasicek {ev:.1e}, convergence CIR {ec:.1e}")


@pytest.mark.parametrize("name,model,exact", [("Vasicek", VAS3, vasicek_price), ("CIR", CIR3, cir_price)])
def test_monte_carlo(name, model, exact):
    t0 = time.perf_counter()
    price, se = mc_bond_price(model, 0.04, 1.0, SimConfig(1 / 250, 1, 11, 200_000))
    z = (price - float(exact(model, 0.04, 1.0))) / se
    record("10", abs(z) <= 3, f"MC {name} 2e5 paths: {z:+.2f} s.e. ({time.perf_counter() - t0:.1f}s)")
