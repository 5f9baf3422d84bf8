"""Command-line front end.

Exit codes: 0 success, 2 input or domain error, 3 a reproduced table cell failed.
Every run writes ``manifest.json`` into ``--out`` with the full argument echo.
Options may also come from a JSON file given by ``--config``; flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tables
from .analysis import grid_error_norms
from .approx import approx_log_price, conv_ap2_price, conv_approx_price
from .calib import CalibrationError, YieldDataset, gamma_scan, latent_short_rate_ckls, latent_short_rate_vasicek
from .closedform import cir_log_price, conv_cir_log_price, conv_vasicek_log_price, vasicek_log_price
from .expexp import black_karasinski, ee_bond_price, ee_bond_price_convolution
from .models import (BlackKarasinskiParams, CKLSParams, ConvergenceModel, DomainError, model_to_dict,
                     model_from_dict)
from .pdeoracle import Grid1D, Grid2D, solve_pde_1f, solve_pde_2f
from .series import TaylorPricer
from .simulate import SimConfig, mc_bond_price, simulate_path_1f, simulate_path_2f

log = logging.getLogger("shortrate")

EXIT_OK, EXIT_INPUT, EXIT_REPRO = 0, 2, 3

DEFAULTS = {
    "out": "runs", "seed": 0, "method": "closed", "order": "base", "re": None, "r": None, "tau": None,
    "grid": None, "conv_step": None, "gamma_grid": "0,0.25,0.5,0.75,1", "latent": False, "dt": 1 / 250,
    "steps": 250, "paths": 1, "mc_paths": None, "J": 6, "N": 6,
}


@dataclass
class RunManifest:
    command: str
    params: dict
    seed: int | None
    artifacts: list = field(default_factory=list)
    wall_time: float = 0.0
    exit_code: int = 0

    def write(self, out: Path) -> Path:
        out.mkdir(parents=True, exist_ok=True)
        path = out / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, default=str))
        return path


class InputError(Exception):
    pass


# --- helpers ---------------------------------------------------------------

def load_model(spec: str):
    """Model from a JSON file path or an inline JSON object."""
    p = Path(spec)
    text = p.read_text() if p.exists() else spec
    try:
        return model_from_dict(json.loads(text))
    except json.JSONDecodeError as e:
        raise InputError(f"model spec is neither a file nor JSON: {spec!r}") from e
    except TypeError as e:
        raise InputError(f"bad model parameters: {e}") from e


def _floats(text) -> list[float]:
    if text is None:
        return []
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as e:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from e


def _grid(text):
    """'lo:hi:n' -> (lo, hi, n)."""
    try:
        lo, hi, n = str(text).split(":")
        return float(lo), float(hi), int(n)
    except ValueError as e:
        raise InputError(f"grid must look like lo:hi:n, got {text!r}") from e


def _need(args, name):
    v = getattr(args, name)
    if v is None:
        raise InputError(f"--{name.replace('_', '-')} is required")
    return v


def _yield_line(price, tau):
    y = -math.log(price) / tau if tau > 0 else float("nan")
    return {"price": price, "yield": y, "yield_pct": 100 * y}


def _write_csv(path: Path, header, rows):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


# --- commands --------------------------------------------------------------

def _log_price(model, args, r, tau):
    method, order = args.method, args.order
    if isinstance(model, ConvergenceModel):
        re = float(_need(args, "re"))
        if method == "closed":
            if model.gamma_d == 0 and model.gamma_e == 0:
                return conv_vasicek_log_price(model, r, re, tau)
            return conv_cir_log_price(model, r, re, tau)
        if method == "approx":
            return conv_ap2_price(model, r, re, tau) if order == "improved" else conv_approx_price(model, r, re, tau)
        if method == "pde":
            lo, hi, n = _grid(args.grid) if args.grid else (0.0 if model.gamma_d > 0 else -0.3, 0.35, 120)
            g = Grid2D(lo, hi, 0.0 if model.gamma_e > 0 else lo, hi, n, n, max(200, int(200 * tau)), tau)
            return float(np.log(solve_pde_2f(model, g, save_taus=[tau]).price(tau, r, re)))
        raise InputError(f"method {method!r} not available for the convergence model")
    if method == "closed":
        if isinstance(model, CKLSParams) and model.gamma == 0:
            return vasicek_log_price(model, r, tau)
        if isinstance(model, CKLSParams) and model.gamma == 0.5:
            return cir_log_price(model, r, tau)
        raise InputError("no closed form for this model; try --method pde, taylor or mc")
    if method in ("cw", "vas_subst"):
        if not isinstance(model, CKLSParams):
            raise InputError(f"{method} needs a CKLS-family model")
        return approx_log_price(model, r, tau, method, order)
    if method == "taylor":
        return math.log(TaylorPricer(model, int(args.J)).price(r, tau))
    if method == "ee":
        if not isinstance(model, BlackKarasinskiParams):
            raise InputError("exponent expansion is implemented for Black-Karasinski")
        tm = black_karasinski(model)
        if args.conv_step:
            return math.log(ee_bond_price_convolution(tm, math.log(r), tau, int(args.N), _floats(args.conv_step)[0]))
        return math.log(ee_bond_price(tm, math.log(r), tau, int(args.N)))
    if method == "pde":
        if args.grid:
            lo, hi, n = _grid(args.grid)
        else:
            lo = 0.0 if getattr(model, "gamma", 0) > 0 else -1.0
            lo, hi, n = (r / 20 if isinstance(model, BlackKarasinskiParams) else lo), 1.5, 2000
        sol = solve_pde_1f(model, Grid1D(lo, hi, n, max(400, int(400 * tau)), tau))
        return float(np.log(sol.price(tau, r)))
    if method == "mc":
        paths = max(int(args.paths), 1000)
        p, se = mc_bond_price(model, r, tau, SimConfig(float(args.dt), 1, int(args.seed), paths))
        log.info("MC standard error %.3g", se)
        return math.log(p)
    raise InputError(f"unknown method {method!r}")


def cmd_price(args, out: Path, artifacts):
    model = load_model(args.model)
    r, tau = float(_need(args, "r")), float(_need(args, "tau"))
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    lp = 0.0 if tau == 0 else float(_log_price(model, args, r, tau))
    res = {"method": args.method, "order": args.order, "r": r, "tau": tau, **_yield_line(math.exp(lp), tau)}
    if tau > 0:
        print(f"price {res['price']:.10f}  yield {res['yield']:.8f} ({res['yield_pct']:.5f}%)  method {args.method}")
    else:
        print(f"price {res['price']:.10f}  method {args.method}")
    path = out / "price.csv"
    _write_csv(path, ["r", "tau", "price", "yield"], [[r, tau, res["price"], res["yield"]]])
    artifacts.append(str(path))
    return EXIT_OK


def cmd_approx_compare(args, out: Path, artifacts):
    model = load_model(args.model)
    if not isinstance(model, CKLSParams):
        raise InputError("approx-compare needs a CKLS-family model")
    lo, hi, n = _grid(args.grid or "0:0.15:1501")
    taus = _floats(args.tau or "1,0.75,0.5,0.25")
    r = np.linspace(lo, hi, n)
    if model.gamma == 0:
        exact = lambda rr, t: vasicek_log_price(model, rr, t)  # noqa: E731
    elif model.gamma == 0.5:
        exact = lambda rr, t: cir_log_price(model, rr, t)  # noqa: E731
    else:
        raise InputError("approx-compare needs gamma 0 or 1/2 for the exact reference")
    method = "cw" if args.method == "closed" else args.method
    rep = grid_error_norms(lambda rr, t: approx_log_price(model, rr, t, method, args.order), exact, r, taus)
    for row in rep.rows():
        e1 = "" if row["eoc_sup"] is None else f"{row['eoc_sup']:.3f}"
        print(f"tau={row['tau']:<6g} sup={row['sup']:.4e} L2={row['l2']:.4e} EOC={e1}")
    path = out / "errors.csv"
    rep.to_csv(path)
    (out / "errors.json").write_text(rep.to_json(indent=2))
    artifacts += [str(path), str(out / "errors.json")]
    return EXIT_OK


def cmd_simulate(args, out: Path, artifacts):
    model = load_model(args.model)
    cfg = SimConfig(float(args.dt), int(args.steps), int(args.seed), 1)
    x0 = _floats(_need(args, "r"))
    if isinstance(model, (CKLSParams, BlackKarasinskiParams)) or len(x0) == 1:
        path = simulate_path_1f(model, x0[0], cfg)
    else:
        path = simulate_path_2f(model, x0, cfg)
    dest = out / "path.csv"
    path.to_csv(dest)
    print(f"wrote {len(path.times)} points to {dest}")
    artifacts.append(str(dest))
    return EXIT_OK


def cmd_series_price(args, out: Path, artifacts):
    model = load_model(args.model)
    r, tau = float(_need(args, "r")), float(_need(args, "tau"))
    J = int(args.J)
    prices = TaylorPricer(model, J).prices(r, tau)
    rows = [[j, float(prices[j])] for j in range(J + 1)]
    for j, p in rows:
        print(f"J={j} price={p:.8f}")
    dest = out / "series.csv"
    _write_csv(dest, ["J", "price"], rows)
    artifacts.append(str(dest))
    return EXIT_OK


def cmd_ee_price(args, out: Path, artifacts):
    model = load_model(args.model)
    if not isinstance(model, BlackKarasinskiParams):
        raise InputError("ee-price needs a Black-Karasinski model")
    r, tau = float(_need(args, "r")), float(_need(args, "tau"))
    if r <= 0:
        raise DomainError("r must be positive")
    tm = black_karasinski(model)
    if args.conv_step:
        rows = [[s, ee_bond_price_convolution(tm, math.log(r), tau, int(args.N), s)] for s in _floats(args.conv_step)]
        header = ["step", "price"]
    else:
        rows = [[n, ee_bond_price(tm, math.log(r), tau, n)] for n in range(1, int(args.N) + 1)]
        header = ["order", "price"]
    for a, p in rows:
        print(f"{header[0]}={a:g} price={p:.8f}")
    dest = out / "ee.csv"
    _write_csv(dest, header, rows)
    artifacts.append(str(dest))
    return EXIT_OK


def cmd_calibrate(args, out: Path, artifacts):
    try:
        data = YieldDataset.from_csv(_need(args, "dataset"))
    except (KeyError, ValueError) as e:
        raise InputError(f"dataset {args.dataset}: {e}") from e
    gammas = _floats(args.gamma_grid)
    latent = bool(args.latent) or data.short_rates is None
    if latent:
        results, rows = [], []
        for g in gammas:
            try:
                res = latent_short_rate_vasicek(data) if g == 0 else latent_short_rate_ckls(data, g)
            except (CalibrationError, DomainError) as e:
                log.warning("gamma=%g: %s", g, e)
                rows.append([g, "", "", "", ""])
                continue
            results.append(res)
            rows.append([res.gamma, res.alpha, res.beta, res.sigma, res.F])
        if not results:
            raise CalibrationError("latent calibration failed for every gamma")
        best = min(results, key=lambda x: x.F)
        rates = out / "short_rates.csv"
        _write_csv(rates, ["date", "short_rate"], [[d, float(v)] for d, v in zip(data.dates, best.short_rates)])
        artifacts.append(str(rates))
    else:
        scan = gamma_scan(data, gammas)
        ok = [s for s in scan if s["result"] is not None]
        if not ok:
            raise CalibrationError("calibration failed for every gamma: " + "; ".join(s["error"] for s in scan))
        best = next(s["result"] for s in scan if s["argmin"])
        rows = [[s["gamma"], *(["", "", "", ""] if s["result"] is None else
                                [s["result"].alpha, s["result"].beta, s["result"].sigma, s["result"].F])]
                for s in scan]
    for row in rows:
        print("gamma={:<5g} alpha={} beta={} sigma={} F={}".format(
            row[0], *(f"{v:.6g}" if isinstance(v, float) else v for v in row[1:])))
    per = out / "gamma_scan.csv"
    _write_csv(per, ["gamma", "alpha", "beta", "sigma", "F"], rows)
    res_path = out / "result.json"
    res_path.write_text(best.to_json(indent=2))
    artifacts += [str(per), str(res_path)]
    return EXIT_OK


def cmd_reproduce(args, out: Path, artifacts):
    kw = {}
    mc_paths = tables.TABLE7_MC_PATHS if args.mc_paths is None else int(args.mc_paths)
    if args.table == "7" and mc_paths:
        kw = {"mc_paths": mc_paths, "seed": int(args.seed) or 2024}
    elif args.table == "4" and args.seed:
        kw = {"seed": int(args.seed)}
    cells, sec = tables.reproduce(args.table, **kw)
    for c in cells:
        print(f"[{c.status:5}] table {c.table} {c.label}: computed {c.computed:.10g} published {c.published:.10g}"
              f" error {c.error:.3e} (tol {c.tol:g} {c.mode})")
    ok = tables.all_pass(cells)
    print(f"table {args.table}: {sum(c.status == 'pass' for c in cells)} pass, "
          f"{sum(c.status == 'fail' for c in cells)} fail, {sum(c.status == 'known' for c in cells)} known"
          f" in {sec:.2f}s")
    dest = out / f"table{args.table}.csv"
    tables.write_cells(cells, dest)
    artifacts.append(str(dest))
    return EXIT_OK if ok else EXIT_REPRO


COMMANDS = {"price": cmd_price, "approx-compare": cmd_approx_compare, "simulate": cmd_simulate,
            "series-price": cmd_series_price, "ee-price": cmd_ee_price, "calibrate": cmd_calibrate,
            "reproduce": cmd_reproduce}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shortrate", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option values (flags win)")
        p.add_argument("--out", help="output directory (default: runs)")
        p.add_argument("--seed", type=int)
        return p

    def model_args(p, rate_help="short rate"):
        p.add_argument("model", help="model JSON file or inline JSON")
        p.add_argument("--r", help=rate_help)
        p.add_argument("--tau")
        return p

    p = model_args(common(sub.add_parser("price", help="price one bond")), "short rate (domestic for two factors)")
    p.add_argument("--re", help="European rate for the convergence model")
    p.add_argument("--method", choices=["closed", "cw", "vas_subst", "approx", "taylor", "ee", "pde", "mc"])
    p.add_argument("--order", choices=["base", "improved"])
    p.add_argument("--grid", help="lo:hi:n for the PDE method")
    p.add_argument("--conv-step", dest="conv_step")
    p.add_argument("--J", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--paths", type=int)

    p = model_args(common(sub.add_parser("approx-compare", help="error norms of an approximation on a grid")))
    p.add_argument("--method", choices=["cw", "vas_subst"])
    p.add_argument("--order", choices=["base", "improved"])
    p.add_argument("--grid", help="lo:hi:n (default 0:0.15:1501)")

    p = common(sub.add_parser("simulate", help="Euler-Maruyama path to CSV"))
    p.add_argument("model")
    p.add_argument("--r", help="start value(s), comma separated for two factors")
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)

    p = model_args(common(sub.add_parser("series-price", help="Taylor partial sums")))
    p.add_argument("--J", type=int)

    p = model_args(common(sub.add_parser("ee-price", help="exponent-expansion prices")))
    p.add_argument("--N", type=int, help="expansion order")
    p.add_argument("--conv-step", dest="conv_step", help="comma-separated convolution steps")

    p = common(sub.add_parser("calibrate", help="fit CKLS parameters to a yield panel"))
    p.add_argument("dataset")
    p.add_argument("--gamma-grid", dest="gamma_grid")
    p.add_argument("--latent", action="store_const", const=True,
                   help="estimate short rates jointly (automatic without a short_rate column)")

    p = common(sub.add_parser("reproduce", help="recompute a published table"))
    p.add_argument("table", choices=sorted(tables.DRIVERS))
    p.add_argument("--mc-paths", dest="mc_paths", type=int, help="Monte-Carlo paths for table 7")
    return ap


def _merge(args, parser_dests):
    cfg = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"config {args.config}: {e}") from e
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
    for k in parser_dests:
        if getattr(args, k, None) is None:
            key = k.replace("_", "-")
            setattr(args, k, cfg.get(k, cfg.get(key, DEFAULTS.get(k))))
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    dests = [k for k in vars(args) if k not in ("command", "verbose")]
    t0 = time.perf_counter()
    artifacts: list = []
    try:
        args = _merge(args, dests)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    code = EXIT_INPUT
    try:
        code = COMMANDS[args.command](args, out, artifacts)
    except (InputError, DomainError, CalibrationError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_INPUT
    finally:
        params = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
        if "model" in params:
            try:
                params["model_spec"] = model_to_dict(load_model(params["model"]))
            except Exception:  # noqa: BLE001 - the echo is best effort; the error was already reported
                pass
        RunManifest(args.command, params, args.seed, artifacts, time.perf_counter() - t0, code).write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
