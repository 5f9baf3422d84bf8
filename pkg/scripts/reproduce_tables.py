"""Reproduce the published tables and write one CSV per table.

Usage: python scripts/reproduce_tables.py [--out DIR] [--tables 3,4,5,6,7,9] [--mc-paths N]
Exits 3 when any counted cell misses its tolerance.
"""

import argparse
import sys
from pathlib import Path

from shortrate import tables


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/tables")
    ap.add_argument("--tables", default=",".join(sorted(tables.DRIVERS)))
    ap.add_argument("--mc-paths", type=int, default=tables.TABLE7_MC_PATHS,
                    help="Monte-Carlo paths for table 7 (0 skips the MC column)")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = True
    for t in args.tables.split(","):
        kw = {"mc_paths": args.mc_paths} if t == "7" else {}
        cells, sec = tables.reproduce(t, **kw)
        tables.write_cells(cells, out / f"table{t}.csv")
        n = {s: sum(c.status == s for c in cells) for s in ("pass", "fail", "known")}
        print(f"table {t}: {n['pass']} pass, {n['fail']} fail, {n['known']} known ({sec:.1f}s)")
        for c in cells:
            if c.status != "pass":
                print(f"    [{c.status}] {c.label}: {c.computed:.8g} vs {c.published:.8g} {c.known}")
        ok &= tables.all_pass(cells)
    return 0 if ok else 3


if __name__ == "__main__":
    sys.exit(main())
