"""Taylor power-series bond pricing for one-factor models.

The log-price f = ln P and the price P are expanded around tau = 0,

    f(tau, r) = sum_j k_j(r) tau^j,     P(tau, r) = sum_j c_j(r) tau^j,

and the coefficient functions are generated symbolically in the basis
r^p (ln r)^q, which is closed under multiplication and differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .models import DomainError, ShortRateModel

_PRUNE = 1e-300
_KEY_DIGITS = 12


def _key(p: float, q: int) -> tuple[float, int]:
    # powers like 2*gamma - 1 accumulate rounding; snap them so equal powers merge
    p = round(float(p), _KEY_DIGITS)
    if p == 0.0:
        p = 0.0
    return p, int(q)


class SeriesInR:
    """Finite sum of terms ``coef * r**p * ln(r)**q``.

    ``q`` is a nonnegative integer, ``p`` any real. Instances are treated as
    immutable values.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict[tuple[float, int], float] | Iterable | None = None):
        merged: dict[tuple[float, int], float] = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, dict) else terms
            for (p, q), c in items:
                if q < 0:
                    raise ValueError("power of ln r must be nonnegative")
                k = _key(p, q)
                merged[k] = merged.get(k, 0.0) + float(c)
        self.terms = {k: c for k, c in merged.items() if abs(c) >= _PRUNE}

    @classmethod
    def const(cls, c: float) -> "SeriesInR":
        return cls({(0.0, 0): c})

    @classmethod
    def monomial(cls, c: float, p: float, q: int = 0) -> "SeriesInR":
        return cls({(p, q): c})

    def __repr__(self) -> str:
        body = " + ".join(f"{c:.6g}*r^{p:g}*ln(r)^{q}" for (p, q), c in sorted(self.terms.items()))
        return f"SeriesInR({body or '0'})"

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other):
        other = _coerce(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return SeriesInR(out)

    __radd__ = __add__

    def __neg__(self):
        return SeriesInR({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return SeriesInR({k: c * other for k, c in self.terms.items()})
        other = _coerce(other)
        out: dict[tuple[float, int], float] = {}
        for (p1, q1), c1 in self.terms.items():
            for (p2, q2), c2 in other.terms.items():
                k = _key(p1 + p2, q1 + q2)
                out[k] = out.get(k, 0.0) + c1 * c2
        return SeriesInR(out)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return self * (1.0 / c)

    def diff(self) -> "SeriesInR":
        """Exact derivative with respect to r."""
        out: dict[tuple[float, int], float] = {}
        for (p, q), c in self.terms.items():
            if p != 0.0:
                k = _key(p - 1.0, q)
                out[k] = out.get(k, 0.0) + c * p
            if q > 0:
                k = _key(p - 1.0, q - 1)
                out[k] = out.get(k, 0.0) + c * q
        return SeriesInR(out)

    def needs_positive_r(self) -> bool:
        return any(q > 0 or p < 0 or (p != int(p)) for (p, q) in self.terms)

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if self.needs_positive_r():
            if np.any(r_arr <= 0):
                bad = any(q > 0 or p < 0 for (p, q) in self.terms)
                if bad or np.any(r_arr < 0):
                    raise DomainError("series contains ln r, negative or fractional powers; need r > 0")
        total = np.zeros_like(r_arr)
        with np.errstate(divide="ignore", invalid="ignore"):
            logr = np.log(r_arr) if any(q > 0 for (_, q) in self.terms) else None
            for (p, q), c in self.terms.items():
                term = np.power(r_arr, p) if p != 0.0 else np.ones_like(r_arr)
                if q:
                    term = term * logr**q
                total = total + c * term
        return total if total.ndim else float(total)


def _coerce(x) -> SeriesInR:
    if isinstance(x, SeriesInR):
        return x
    if isinstance(x, (int, float)):
        return SeriesInR.const(float(x))
    raise TypeError(f"cannot combine SeriesInR with {type(x).__name__}")


def drift_variance_series(model: ShortRateModel) -> tuple[SeriesInR, SeriesInR]:
    """Risk-neutral drift mu(r) and variance sigma(r)^2 in the r^p (ln r)^q basis."""
    fam = model.family
    if fam == "ckls":
        a, b, s, g = model.alpha, model.beta, model.sigma, model.gamma
        mu = SeriesInR({(0.0, 0): a, (1.0, 0): b})
        var = SeriesInR({(2.0 * g, 0): s * s})
    elif fam == "black_karasinski":
        k, th, s = model.kappa, model.theta, model.sigma
        mu = SeriesInR({(1.0, 0): k * th + 0.5 * s * s, (1.0, 1): -k})
        var = SeriesInR({(2.0, 0): s * s})
    elif fam == "ait_sahalia":
        mu = SeriesInR({(-1.0, 0): model.a_m1, (0.0, 0): model.a_0,
                        (1.0, 0): model.a_1, (2.0, 0): model.a_2})
        var = SeriesInR({(2.0 * model.gamma, 0): model.sigma ** 2})
    else:
        raise ValueError(f"no series representation for family {fam!r}")
    return mu, var


def taylor_log_coeffs(model: ShortRateModel, J: int) -> list[SeriesInR]:
    """Coefficients k_0..k_J of the log-price expansion.

    Substituting the expansion into
    d_tau f = sigma^2/2 [(f_r)^2 + f_rr] + mu f_r - r
    and matching powers of tau gives
    (j+1) k_{j+1} = sigma^2/2 [sum_{i+l=j} k_i' k_l' + k_j''] + mu k_j' - r [j=0].
    """
    if J < 0:
        raise ValueError("J must be nonnegative")
    mu, var = drift_variance_series(model)
    half_var = var * 0.5
    k = [SeriesInR()]
    dk = [SeriesInR()]
    for j in range(J):
        conv = SeriesInR()
        for i in range(1, j):
            conv = conv + dk[i] * dk[j - i]
        rhs = half_var * (conv + dk[j].diff()) + mu * dk[j]
        if j == 0:
            rhs = rhs - SeriesInR.monomial(1.0, 1.0)
        nxt = rhs / (j + 1)
        k.append(nxt)
        dk.append(nxt.diff())
    return k


def taylor_price_coeffs(model: ShortRateModel, J: int) -> list[SeriesInR]:
    """Coefficients c_0..c_J of the price expansion, from
    (j+1) c_{j+1} = sigma^2/2 c_j'' + mu c_j' - r c_j with c_0 = 1."""
    if J < 0:
        raise ValueError("J must be nonnegative")
    mu, var = drift_variance_series(model)
    half_var = var * 0.5
    r = SeriesInR.monomial(1.0, 1.0)
    c = [SeriesInR.const(1.0)]
    for j in range(J):
        d1 = c[j].diff()
        c.append((half_var * d1.diff() + mu * d1 - r * c[j]) / (j + 1))
    return c


@dataclass(frozen=True)
class TaylorPricer:
    """Truncated Taylor pricer holding precomputed coefficient functions.

    ``kind="price"`` (default) sums the price series directly; ``kind="log"``
    exponentiates the log-price partial sum.
    """

    model: ShortRateModel
    J: int
    kind: str = "price"
    coeffs: tuple = field(init=False)

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if self.kind == "log":
            coeffs = taylor_log_coeffs(self.model, self.J)
        elif self.kind == "price":
            coeffs = taylor_price_coeffs(self.model, self.J)
        else:
            raise ValueError("kind must be 'log' or 'price'")
        object.__setattr__(self, "coeffs", tuple(coeffs))

    def partial_sums(self, r: float, tau: float) -> np.ndarray:
        """Partial sums S_0..S_J of the chosen series at (r, tau)."""
        if r <= 0 and any(c.needs_positive_r() for c in self.coeffs):
            raise DomainError("r must be positive for this model's series")
        vals = np.array([c(r) * tau ** j for j, c in enumerate(self.coeffs)])
        return np.cumsum(vals)

    def prices(self, r: float, tau: float) -> np.ndarray:
        """Prices for truncation orders 0..J."""
        s = self.partial_sums(r, tau)
        return np.exp(s) if self.kind == "log" else s

    def price(self, r: float, tau: float) -> float:
        return float(self.prices(r, tau)[-1])


def taylor_price(model: ShortRateModel, r: float, tau: float, J: int,
                 kind: str = "price") -> tuple[float, float]:
    """Truncated Taylor price and its last increment |P_J - P_{J-1}|."""
    p = TaylorPricer(model, J, kind).prices(r, tau)
    return float(p[-1]), float(abs(p[-1] - p[-2]))


class BivariateSeries:
    """Finite sum of terms ``coef * rd**p * re**q`` with real powers."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        merged: dict[tuple[float, float], float] = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, dict) else terms
            for (p, q), c in items:
                k = (_key(p, 0)[0], _key(q, 0)[0])
                merged[k] = merged.get(k, 0.0) + float(c)
        self.terms = {k: c for k, c in merged.items() if abs(c) >= _PRUNE}

    @classmethod
    def const(cls, c: float) -> "BivariateSeries":
        return cls({(0.0, 0.0): c})

    @classmethod
    def monomial(cls, c: float, p: float, q: float = 0.0) -> "BivariateSeries":
        return cls({(p, q): c})

    def __repr__(self) -> str:
        body = " + ".join(f"{c:.6g}*rd^{p:g}*re^{q:g}" for (p, q), c in sorted(self.terms.items()))
        return f"BivariateSeries({body or '0'})"

    def __add__(self, other):
        other = _coerce2(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, 0.0) + c
        return BivariateSeries(out)

    __radd__ = __add__

    def __neg__(self):
        return BivariateSeries({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-_coerce2(other))

    def __rsub__(self, other):
        return _coerce2(other) - self

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return BivariateSeries({k: c * other for k, c in self.terms.items()})
        other = _coerce2(other)
        out: dict[tuple[float, float], float] = {}
        for (p1, q1), c1 in self.terms.items():
            for (p2, q2), c2 in other.terms.items():
                k = (_key(p1 + p2, 0)[0], _key(q1 + q2, 0)[0])
                out[k] = out.get(k, 0.0) + c1 * c2
        return BivariateSeries(out)

    __rmul__ = __mul__

    def __truediv__(self, c: float):
        return self * (1.0 / c)

    def diff(self, axis: int) -> "BivariateSeries":
        """Exact partial derivative; axis 0 is rd, axis 1 is re."""
        out = {}
        for (p, q), c in self.terms.items():
            e = (p, q)[axis]
            if e != 0.0:
                k = (p - 1.0, q) if axis == 0 else (p, q - 1.0)
                out[k] = out.get(k, 0.0) + c * e
        return BivariateSeries(out)

    def __call__(self, rd, re):
        rd = np.asarray(rd, dtype=float)
        re = np.asarray(re, dtype=float)
        for (p, q) in self.terms:
            if (p < 0 and np.any(rd <= 0)) or (q < 0 and np.any(re <= 0)):
                raise DomainError("negative powers of the rates need rd, re > 0")
        total = np.zeros(np.broadcast(rd, re).shape)
        for (p, q), c in self.terms.items():
            term = c * (np.power(rd, p) if p != 0.0 else 1.0) * (np.power(re, q) if q != 0.0 else 1.0)
            total = total + term
        return total if total.ndim else float(total)


def _coerce2(x) -> BivariateSeries:
    if isinstance(x, BivariateSeries):
        return x
    if isinstance(x, (int, float)):
        return BivariateSeries.const(float(x))
    raise TypeError(f"cannot combine BivariateSeries with {type(x).__name__}")


def convergence_log_coeffs(model, J: int) -> list[BivariateSeries]:
    """Taylor coefficients k_0..k_J of ln P for the two-factor convergence PDE.

    Same construction as the one-factor log series with the generator
    mu_d d_d + mu_e d_e + vd/2 d_dd + ve/2 d_ee + cov d_de.
    """
    m = model
    mu_d = BivariateSeries({(0.0, 0.0): m.a1, (1.0, 0.0): m.a2, (0.0, 1.0): m.a3})
    mu_e = BivariateSeries({(0.0, 0.0): m.b1, (0.0, 1.0): m.b2})
    vd = BivariateSeries.monomial(m.sigma_d ** 2, 2 * m.gamma_d, 0.0)
    ve = BivariateSeries.monomial(m.sigma_e ** 2, 0.0, 2 * m.gamma_e)
    cov = BivariateSeries.monomial(m.rho * m.sigma_d * m.sigma_e, m.gamma_d, m.gamma_e)
    k = [BivariateSeries()]
    kd = [BivariateSeries()]
    ke = [BivariateSeries()]
    for j in range(J):
        sdd, see, sde = BivariateSeries(), BivariateSeries(), BivariateSeries()
        for i in range(1, j):
            sdd = sdd + kd[i] * kd[j - i]
            see = see + ke[i] * ke[j - i]
            sde = sde + kd[i] * ke[j - i]
        rhs = (mu_d * kd[j] + mu_e * ke[j] + vd * 0.5 * (sdd + kd[j].diff(0))
               + ve * 0.5 * (see + ke[j].diff(1)) + cov * (sde + kd[j].diff(1)))
        if j == 0:
            rhs = rhs - BivariateSeries.monomial(1.0, 1.0, 0.0)
        nxt = rhs / (j + 1)
        k.append(nxt)
        kd.append(nxt.diff(0))
        ke.append(nxt.diff(1))
    return k
