"""Error norms on rate grids and experimental orders of convergence.

For a function sampled on a uniform grid with step h

    ||f||_inf = max |f(x_i)|,     ||f||_2 = (h sum f(x_i)^2)^{1/2},

and for errors err_i at maturities tau_i

    EOC_i = ln(err_i / err_{i+1}) / ln(tau_i / tau_{i+1}).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.01


@dataclass
class ErrorReport:
    taus: np.ndarray
    sup: np.ndarray
    l2: np.ndarray
    eoc_sup: np.ndarray
    eoc_l2: np.ndarray
    grid: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for k, t in enumerate(self.taus):
            out.append({"tau": float(t), "sup": float(self.sup[k]), "l2": float(self.l2[k]),
                        "eoc_sup": _opt(self.eoc_sup, k), "eoc_l2": _opt(self.eoc_l2, k)})
        return out

    def to_csv(self, path) -> None:
        rows = self.rows()
        with open(Path(path), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: "" if v is None else repr(v) for k, v in r.items()})

    def to_json(self, **kw) -> str:
        return json.dumps({"grid": self.grid, "rows": self.rows()}, **kw)


def _opt(arr, k):
    if k >= len(arr) or not np.isfinite(arr[k]):
        return None
    return float(arr[k])


def eoc(errors, taus) -> np.ndarray:
    """EOC for consecutive pairs; NaN where an error is zero (undefined)."""
    e = np.asarray(errors, dtype=float)
    t = np.asarray(taus, dtype=float)
    if e.shape != t.shape:
        raise ValueError("errors and taus differ in length")
    if np.any(e < 0):
        raise ValueError("errors must be nonnegative")
    if len(np.unique(t)) != len(t):
        raise ValueError("taus must be distinct")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(e[:-1] / e[1:]) / np.log(t[:-1] / t[1:])
    ok = (e[:-1] > 0) & (e[1:] > 0)
    return np.where(ok, out, np.nan)


def fitted_order(errors, taus) -> float:
    """Least-squares slope of ln err against ln tau."""
    e = np.asarray(errors, dtype=float)
    t = np.asarray(taus, dtype=float)
    if np.any(e <= 0):
        raise ValueError("errors must be positive to fit an order")
    return float(np.polyfit(np.log(t), np.log(e), 1)[0])


def grid_norms(values, h: float):
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(v))), float(np.sqrt(h * np.sum(v * v)))


def _eval_row(f, r_grid, tau):
    """Evaluate f on the grid, point by point only if the vector call fails."""
    try:
        out = np.asarray(f(r_grid, tau), dtype=float)
        if out.shape == r_grid.shape and np.all(np.isfinite(out)):
            return out
    except (ValueError, ArithmeticError):
        pass
    out = np.full(r_grid.shape, np.nan)
    for i, r in enumerate(r_grid):
        try:
            out[i] = np.asarray(f(r, tau), dtype=float).item()
        except (ValueError, ArithmeticError) as e:
            log.debug("evaluation failed at r=%g, tau=%g: %s", r, tau, e)
    return out


def grid_error_norms(f_approx, f_exact, r_grid, tau_list) -> ErrorReport:
    """Sup and L2 norms of f_approx - f_exact over a uniform r-grid per maturity.

    Both callables take (r_array, tau) and return log-prices. Grid points
    where either evaluation fails are dropped if they are under 1% of the
    grid; otherwise a ValueError is raised.
    """
    r = np.asarray(r_grid, dtype=float)
    d = np.diff(r)
    if r.size < 2 or not np.allclose(d, d[0], rtol=1e-9, atol=0):
        raise ValueError("r-grid must be uniform")
    h = float(d[0])
    taus = np.asarray(tau_list, dtype=float)
    sup, l2, dropped = [], [], []
    for t in taus:
        diff = _eval_row(f_approx, r, t) - _eval_row(f_exact, r, t)
        bad = ~np.isfinite(diff)
        if bad.mean() >= MAX_FAILED_FRACTION and bad.any():
            raise ValueError(f"{int(bad.sum())} of {r.size} grid points failed at tau={t}")
        dropped.append(int(bad.sum()))
        s, l = grid_norms(diff[~bad], h)
        sup.append(s)
        l2.append(l)
    sup, l2 = np.array(sup), np.array(l2)
    return ErrorReport(taus, sup, l2, eoc(sup, taus), eoc(l2, taus),
                       {"r_min": float(r[0]), "r_max": float(r[-1]), "n": int(r.size), "h": h,
                        "dropped": dropped})


def report_dict(report: ErrorReport) -> dict:
    d = asdict(report)
    return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}
