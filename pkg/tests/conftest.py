import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shortrate.models import ConvergenceModel, cir, vasicek

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("ci", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

EPS = np.finfo(float).eps


def ulp_close(a, b, n=8, scale=None):
    """|a - b| <= n ulp of the larger magnitude (or of ``scale`` when given)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if scale is None:
        scale = np.maximum(np.abs(a), np.abs(b))
    return bool(np.all(np.abs(a - b) <= n * EPS * np.maximum(scale, np.finfo(float).tiny)))


@pytest.fixture
def cir3():
    """CIR parameters of the approximation-error table."""
    return cir(0.00315, -0.0555, 0.0894)


@pytest.fixture
def vas3():
    return vasicek(0.00315, -0.0555, 0.0894)


@pytest.fixture
def conv9():
    """Convergence CIR parameters of the yield table."""
    return ConvergenceModel(a1=0.0075, a2=-2.0, a3=2.0, b1=0.003, b2=-0.2, sigma_d=0.03, sigma_e=0.01,
                            gamma_d=0.5, gamma_e=0.5, rho=0.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    rows = getattr(mod, "RESULTS", None)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(rows, key=lambda x: int(x[0])):
        terminalreporter.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
