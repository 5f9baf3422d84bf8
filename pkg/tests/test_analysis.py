import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shortrate.analysis import eoc, fitted_order, grid_error_norms, grid_norms, report_dict
from shortrate.tables import table3_reports

R = np.linspace(0.0, 0.15, 1501)


@pytest.fixture(scope="module")
def reports():
    return table3_reports()


def test_identical_functions_have_zero_norms():
    f = lambda r, t: -r * t  # noqa: E731
    rep = grid_error_norms(f, f, R, [0.5, 1.0])
    assert np.all(rep.sup == 0) and np.all(rep.l2 == 0)
    assert np.all(np.isnan(rep.eoc_sup))


def test_norm_definitions():
    s, l2 = grid_norms([3.0, -4.0], 0.5)
    assert s == 4.0 and l2 == pytest.approx(np.sqrt(0.5 * 25))


def test_table3_norms(reports):
    ap, _ = reports
    assert ap.sup[3] == pytest.approx(2.876e-10, rel=0.02)
    assert ap.l2[0] == pytest.approx(6.345e-8, rel=0.02)


def test_table3_eoc(reports):
    ap, ap2 = reports
    assert ap.eoc_sup[0] == pytest.approx(4.930, abs=0.05)
    assert ap2.eoc_sup[1] == pytest.approx(7.029, abs=0.05)


def test_sup_dominates_scaled_l2(reports):
    for rep in reports:
        assert np.all(rep.sup >= rep.l2 / np.sqrt(0.15) * (1 - 1e-12))


@given(st.floats(1e-12, 1e3), st.integers(1, 9))
def test_power_law_eoc_is_exact(c, k):
    taus = np.array([1.0, 0.75, 0.5, 0.25])
    assert np.allclose(eoc(c * taus ** k, taus), k, atol=1e-12, rtol=0)
    assert fitted_order(c * taus ** k, taus) == pytest.approx(k, abs=1e-10)


def test_eoc_zero_error_is_nan_not_error():
    out = eoc([1e-3, 0.0, 1e-5], [1.0, 0.5, 0.25])
    assert np.all(np.isnan(out))
    with pytest.raises(ValueError):
        eoc([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        fitted_order([0.0, 1.0], [1.0, 2.0])


def test_nonuniform_grid_rejected():
    f = lambda r, t: r  # noqa: E731
    with pytest.raises(ValueError, match="uniform"):
        grid_error_norms(f, f, np.array([0.0, 0.1, 0.3]), [1.0])


def test_few_failures_are_dropped():
    def bad(r, t):
        r = np.atleast_1d(r)
        if np.any(r == 0):
            raise ValueError("singular at zero")
        return np.zeros_like(r)
    rep = grid_error_norms(bad, lambda r, t: np.zeros_like(r), R, [1.0])
    assert rep.grid["dropped"] == [1] and rep.sup[0] == 0


def test_many_failures_abort():
    def bad(r, t):
        raise ValueError("nope")
    with pytest.raises(ValueError, match="failed"):
        grid_error_norms(bad, lambda r, t: np.zeros_like(r), R, [1.0])


def test_exports(reports, tmp_path):
    ap, _ = reports
    ap.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "tau,sup,l2,eoc_sup,eoc_l2" and len(lines) == 5
    d = json.loads(ap.to_json())
    assert d["grid"]["n"] == 1501 and d["rows"][-1]["eoc_sup"] is None
    assert report_dict(ap)["sup"][0] == ap.sup[0]
