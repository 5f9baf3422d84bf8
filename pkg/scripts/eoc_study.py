"""Error norms and experimental orders of convergence for every approximation.

One-factor formulas are compared with the CIR closed form on r in [0, 0.15];
convergence-model formulas with the ODE solution at fixed (rd, re) on short
maturities. Writes eoc_<name>.csv files and prints fitted orders.
"""

import argparse
from pathlib import Path

import numpy as np

from shortrate.analysis import fitted_order, grid_error_norms
from shortrate.approx import conv_ap2_price, conv_approx_price, cw_ap2_price, cw_price, vas_subst_price
from shortrate.closedform import cir_log_price, conv_cir_log_price
from shortrate.models import ConvergenceModel, cir

ONE_FACTOR = {"cw": (cw_price, 5), "cw_ap2": (cw_ap2_price, 7), "vas_subst": (vas_subst_price, 4)}
CONVERGENCE = {"conv": (conv_approx_price, 4), "conv_ap2": (conv_ap2_price, 6)}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/eoc")
    ap.add_argument("--nodes", type=int, default=1501)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    p = cir(0.00315, -0.0555, 0.0894)
    r = np.linspace(0.0, 0.15, args.nodes)
    taus = [1.0, 0.75, 0.5, 0.25]
    for name, (fn, order) in ONE_FACTOR.items():
        rep = grid_error_norms(lambda x, t: fn(p, x, t), lambda x, t: cir_log_price(p, x, t), r, taus)
        rep.to_csv(out / f"eoc_{name}.csv")
        print(f"{name:10s} expected {order}  sup {fitted_order(rep.sup, taus):.3f}  l2 {fitted_order(rep.l2, taus):.3f}")

    m = ConvergenceModel(0.0075, -2.0, 2.0, 0.003, -0.2, 0.03, 0.01, 0.5, 0.5, 0.0)
    short = np.geomspace(0.02, 0.1, 8)
    for name, (fn, order) in CONVERGENCE.items():
        errs = np.array([abs(fn(m, 0.017, 0.01, t) - conv_cir_log_price(m, 0.017, 0.01, t)) for t in short])
        np.savetxt(out / f"eoc_{name}.csv", np.column_stack([short, errs]), delimiter=",",
                   header="tau,abs_error", comments="")
        print(f"{name:10s} expected {order}  fitted {fitted_order(errs, short):.3f}")


if __name__ == "__main__":
    main()
