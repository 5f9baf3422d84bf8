import csv
import math

import pytest

from shortrate import tables
from shortrate.tables import Cell, all_pass, reproduce, write_cells


def test_cell_modes():
    assert Cell("x", "a", 1.00004, 1.0, 5e-5).status == "pass"
    assert Cell("x", "a", 1.1, 1.0, 0.05, "rel").status == "fail"
    assert Cell("x", "a", 1.1, 1.0, 0.05, "rel", known="misprint").status == "known"
    assert Cell("x", "a", 1.02, 1.0, 3.0, "se", scale=0.01).ok
    assert Cell("x", "a", 1.0, 1.0, 3.0, "se", scale=0.0).ok
    assert math.isinf(Cell("x", "a", 1.1, 1.0, 3.0, "se", scale=0.0).error)


def test_known_cells_do_not_count():
    cells = [Cell("x", "a", 1.0, 1.0, 0.0), Cell("x", "b", 2.0, 1.0, 0.0, known="misprint")]
    assert all_pass(cells)
    assert not all_pass(cells + [Cell("x", "c", 2.0, 1.0, 0.0)])


@pytest.mark.parametrize("table,n_cells,n_known", [("3", 28, 0), ("4", 5, 0), ("5", 54, 2), ("6", 24, 0),
                                                   ("7", 9, 0), ("9", 48, 9)])
def test_drivers_reproduce(table, n_cells, n_known):
    cells, seconds = reproduce(table)
    assert len(cells) == n_cells
    assert sum(c.status == "known" for c in cells) == n_known
    assert all_pass(cells), [c.label for c in cells if c.status == "fail"]


def test_unknown_table():
    with pytest.raises(ValueError, match="unsupported"):
        reproduce("8")


def test_write_cells(tmp_path):
    cells, _ = reproduce("5")
    write_cells(cells, tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert len(rows) == 54 and {r["status"] for r in rows} == {"pass", "known"}


def test_day_252_rates_are_recovered():
    rd, re = tables.table9_rates(252)
    assert rd == pytest.approx(0.00979677, abs=1e-7) and re == pytest.approx(0.01080056, abs=1e-7)
    assert tables.table9_rates(1) == (0.017, 0.01)


@pytest.mark.xfail(strict=True, reason="day-252 caption rates do not generate the printed exact yields")
def test_day_252_caption_rates():
    ex, _ = tables.table9_yields(*tables.TABLE9[252]["rates"])
    assert max(abs(e - p) for e, p in zip(ex, tables.TABLE9[252]["exact"])) < tables.TABLE9_YIELD_TOL


@pytest.mark.xfail(strict=True, reason="the captioned kappa=1 does not generate the printed Table 6 values")
def test_table6_caption_kappa():
    assert all_pass(tables.table6(kappa=1.0))


@pytest.mark.xfail(strict=True, reason="the captioned kappa=1 does not generate the printed Table 7 values")
def test_table7_caption_kappa():
    assert all_pass(tables.table7(kappa=1.0))


@pytest.mark.xfail(strict=True, reason="printed differences below the printed yield resolution")
def test_table9_unreproduced_differences():
    cells = [c for c in tables.table9() if c.known]
    assert all(c.ok for c in cells)


@pytest.mark.xfail(strict=True, reason="two published sigma^2=0.02 J=3 cells repeat the sigma^2=0.03 row")
def test_table5_repeated_cells():
    assert all(c.ok for c in tables.table5() if c.known)
