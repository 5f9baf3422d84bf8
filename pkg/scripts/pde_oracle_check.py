"""Compare the finite-difference solvers with closed forms under grid refinement.

Prints the maximum yield error on r in [0, 0.1] for each grid, the error
ratio between successive grids (about 4 for second order), and the
two-factor errors at (rd, re) = (0.017, 0.01).
"""

import time

import numpy as np

from shortrate.closedform import cir_price, conv_cir_price, conv_vasicek_price, vasicek_price
from shortrate.models import ConvergenceModel, cir, vasicek
from shortrate.pdeoracle import Grid1D, Grid2D, solve_pde_1f, solve_pde_2f

TAU = 1.0


def one_factor(name, model, exact, lo, hi):
    prev = None
    for n, nt in ((101, 25), (201, 50), (401, 100), (801, 200)):
        t0 = time.perf_counter()
        sol = solve_pde_1f(model, Grid1D(lo, hi, n, nt, TAU))
        r = sol.axes[0]
        sel = (r >= 0) & (r <= 0.1)
        err = float(np.max(np.abs(sol.yield_(TAU, r[sel]) + np.log(exact(model, r[sel], TAU)) / TAU)))
        ratio = f"{prev / err:5.2f}" if prev else "    -"
        print(f"{name:8s} n_r={n:4d} n_tau={nt:4d}  yield error {err:.3e}  ratio {ratio}"
              f"  ({time.perf_counter() - t0:.2f}s)")
        prev = err


def two_factor():
    base = ConvergenceModel(0.0075, -2.0, 2.0, 0.003, -0.2, 0.03, 0.01, 0.5, 0.5, 0.0)
    vas = base.with_(gamma_d=0.0, gamma_e=0.0, rho=0.2)
    taus = [0.25, 0.5, 1.0, 2.0, 5.0]
    for name, m, exact, lo in (("conv-Vas", vas, conv_vasicek_price, -0.3), ("conv-CIR", base, conv_cir_price, 0.0)):
        t0 = time.perf_counter()
        sol = solve_pde_2f(m, Grid2D(lo, 0.35, lo, 0.35, 80, 80, 500, 5.0), save_taus=taus)
        errs = [abs(sol.yield_(t, 0.017, 0.01) + np.log(exact(m, 0.017, 0.01, t)) / t) for t in taus]
        print(f"{name:8s} max yield error over tau {taus}: {max(errs):.2e} ({time.perf_counter() - t0:.2f}s)")


if __name__ == "__main__":
    p = (0.00315, -0.0555, 0.0894)
    one_factor("Vasicek", vasicek(*p), vasicek_price, -0.8, 0.8)
    one_factor("CIR", cir(*p), cir_price, 0.0, 1.6)
    two_factor()
