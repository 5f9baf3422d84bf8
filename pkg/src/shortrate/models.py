"""Model families as immutable parameter records.

All rates are decimals (0.05 means five percent). One-factor models carry a
``family`` tag so pricers can dispatch on it; every one-factor record exposes
``drift(r)`` and ``vol(r)`` under the risk-neutral measure.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Union

import numpy as np


class DomainError(ValueError):
    """Raised when an input lies outside a model's or formula's domain."""


def _check_finite(obj) -> None:
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError(f"{type(obj).__name__}.{f.name} must be finite")


def _power(r, p):
    """r**p with the continuous-limit convention 0**p = 0 for p > 0."""
    r = np.asarray(r, dtype=float)
    if p == 0:
        return np.ones_like(r)
    return np.power(r, p)


@dataclass(frozen=True)
class CKLSParams:
    """Risk-neutral dr = (alpha + beta r) dt + sigma r^gamma dw."""

    alpha: float
    beta: float
    sigma: float
    gamma: float = 0.0
    family = "ckls"

    def __post_init__(self):
        for name in ("alpha", "beta", "sigma", "gamma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_finite(self)
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    def _check_r(self, r):
        if self.gamma > 0 and np.any(np.asarray(r) < 0):
            raise DomainError(f"r must be nonnegative for gamma={self.gamma}")

    def drift(self, r):
        self._check_r(r)
        return self.alpha + self.beta * np.asarray(r, dtype=float)

    def vol(self, r):
        self._check_r(r)
        return self.sigma * _power(r, self.gamma)

    def variance(self, r):
        self._check_r(r)
        return self.sigma ** 2 * _power(r, 2.0 * self.gamma)

    def with_(self, **kw) -> "CKLSParams":
        return CKLSParams(**{**asdict(self), **kw})


def vasicek(alpha: float, beta: float, sigma: float) -> CKLSParams:
    return CKLSParams(alpha, beta, sigma, 0.0)


def cir(alpha: float, beta: float, sigma: float) -> CKLSParams:
    return CKLSParams(alpha, beta, sigma, 0.5)


def dothan(mu: float, sigma: float) -> CKLSParams:
    """dr = mu r dt + sigma r dw (risk-neutral)."""
    return CKLSParams(0.0, mu, sigma, 1.0)


def merton(alpha: float, sigma: float) -> CKLSParams:
    return CKLSParams(alpha, 0.0, sigma, 0.0)


@dataclass(frozen=True)
class BlackKarasinskiParams:
    """r = exp(x) with dx = kappa (theta - x) dt + sigma dw."""

    kappa: float
    theta: float
    sigma: float
    family = "black_karasinski"

    def __post_init__(self):
        for name in ("kappa", "theta", "sigma"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_finite(self)
        if self.kappa <= 0 or self.sigma <= 0:
            raise ValueError("kappa and sigma must be positive")

    def _check_r(self, r):
        if np.any(np.asarray(r) <= 0):
            raise DomainError("Black-Karasinski short rate must be positive")

    def drift(self, r):
        self._check_r(r)
        r = np.asarray(r, dtype=float)
        return r * (self.kappa * self.theta + 0.5 * self.sigma ** 2 - self.kappa * np.log(r))

    def vol(self, r):
        self._check_r(r)
        return self.sigma * np.asarray(r, dtype=float)

    def variance(self, r):
        return self.vol(r) ** 2


@dataclass(frozen=True)
class AitSahaliaDriftParams:
    """dr = (a_m1/r + a_0 + a_1 r + a_2 r^2) dt + sigma r^gamma dw.

    Catalogued for simulation and drift evaluation; no market price of risk
    is attached, so no bond pricer accepts it as risk-neutral input by default.
    """

    a_m1: float
    a_0: float
    a_1: float
    a_2: float
    sigma: float
    gamma: float
    family = "ait_sahalia"

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        _check_finite(self)
        if self.sigma <= 0 or self.gamma < 0:
            raise ValueError("need sigma > 0 and gamma >= 0")

    def drift(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("drift has an r^-1 term; r must be positive")
        return self.a_m1 / r + self.a_0 + self.a_1 * r + self.a_2 * r ** 2

    def vol(self, r):
        if self.gamma > 0 and np.any(np.asarray(r) < 0):
            raise DomainError("r must be nonnegative")
        return self.sigma * _power(r, self.gamma)

    def variance(self, r):
        return self.vol(r) ** 2


ShortRateModel = Union[CKLSParams, BlackKarasinskiParams, AitSahaliaDriftParams]


def drift_vol(model: ShortRateModel, r):
    """Risk-neutral drift and volatility of a one-factor model at r."""
    return model.drift(r), model.vol(r)


# --- real-measure parametrisations -------------------------------------------

@dataclass(frozen=True)
class VasicekRealParams:
    """dr = kappa (theta - r) dt + sigma dw with constant market price of risk."""

    kappa: float
    theta: float
    sigma: float
    lam: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0 or self.sigma <= 0:
            raise ValueError("kappa and sigma must be positive")


@dataclass(frozen=True)
class CIRRealParams:
    """dr = kappa (theta - r) dt + sigma sqrt(r) dw with price of risk lam*sqrt(r)."""

    kappa: float
    theta: float
    sigma: float
    lam: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0 or self.sigma <= 0:
            raise ValueError("kappa and sigma must be positive")


def to_risk_neutral(real: VasicekRealParams | CIRRealParams) -> CKLSParams:
    """Risk-neutral drift mu - lambda*sigma, volatility unchanged."""
    if isinstance(real, VasicekRealParams):
        return CKLSParams(real.kappa * real.theta - real.lam * real.sigma,
                          -real.kappa, real.sigma, 0.0)
    if isinstance(real, CIRRealParams):
        # lambda sqrt(r) * sigma sqrt(r) = lambda sigma r shifts the slope only
        return CKLSParams(real.kappa * real.theta,
                          -real.kappa - real.lam * real.sigma, real.sigma, 0.5)
    if isinstance(real, CKLSParams):
        return real
    raise TypeError(f"unsupported real-measure parameters {type(real).__name__}")


# --- multi-factor models ----------------------------------------------------

@dataclass(frozen=True)
class ConvergenceModel:
    """Domestic/European short-rate pair under the risk-neutral measure.

    dr_d = (a1 + a2 r_d + a3 r_e) dt + sigma_d r_d^gamma_d dw_d
    dr_e = (b1 + b2 r_e) dt + sigma_e r_e^gamma_e dw_e,   corr(dw_d, dw_e) = rho
    """

    a1: float
    a2: float
    a3: float
    b1: float
    b2: float
    sigma_d: float
    sigma_e: float
    gamma_d: float = 0.0
    gamma_e: float = 0.0
    rho: float = 0.0
    family = "convergence"

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, float(getattr(self, f.name)))
        _check_finite(self)
        if self.sigma_d < 0 or self.sigma_e < 0:
            raise ValueError("volatility scales must be nonnegative")
        if self.gamma_d < 0 or self.gamma_e < 0:
            raise ValueError("volatility exponents must be nonnegative")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")

    @classmethod
    def from_real(cls, a, b, c, d, sigma_d, sigma_e, lam_d=0.0, lam_e=0.0, rho=0.0,
                  gamma_d=0.0, gamma_e=0.0) -> "ConvergenceModel":
        """Corzo-Schwarz style real-measure parameters with constant prices of risk.

        For gamma=1/2 with prices of risk lam*sqrt(r) the resulting shift is
        also taken as lam*sigma on the intercept, matching the convention of
        published convergence-CIR examples.
        """
        return cls(a1=a - lam_d * sigma_d, a2=-b, a3=b, b1=c * d - lam_e * sigma_e, b2=-c,
                   sigma_d=sigma_d, sigma_e=sigma_e, gamma_d=gamma_d, gamma_e=gamma_e, rho=rho)

    def with_(self, **kw) -> "ConvergenceModel":
        return ConvergenceModel(**{**asdict(self), **kw})

    def drift(self, rd, re):
        return self.a1 + self.a2 * np.asarray(rd) + self.a3 * np.asarray(re), \
            self.b1 + self.b2 * np.asarray(re)

    def vol(self, rd, re):
        return self.sigma_d * _power(rd, self.gamma_d), self.sigma_e * _power(re, self.gamma_e)


@dataclass(frozen=True)
class FongVasicekParams:
    """dr = kappa1 (theta1 - r) dt + sqrt(y) dw1,  dy = kappa2 (theta2 - y) dt + v sqrt(y) dw2.

    Real-measure dynamics; prices of risk lambda1 sqrt(y), lambda2 sqrt(y) are
    carried but only simulation is supported.
    """

    kappa1: float
    theta1: float
    kappa2: float
    theta2: float
    v: float
    rho: float = 0.0
    lambda1: float = 0.0
    lambda2: float = 0.0
    family = "fong_vasicek"

    def __post_init__(self):
        if self.kappa1 <= 0 or self.kappa2 <= 0 or self.v <= 0:
            raise ValueError("kappa1, kappa2 and v must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")


@dataclass(frozen=True)
class CIRFactor:
    kappa: float
    theta: float
    sigma: float
    lam: float = 0.0

    def __post_init__(self):
        if self.kappa <= 0 or self.sigma <= 0:
            raise ValueError("kappa and sigma must be positive")

    def risk_neutral(self) -> CKLSParams:
        return to_risk_neutral(CIRRealParams(self.kappa, self.theta, self.sigma, self.lam))


@dataclass(frozen=True)
class MultiCIRParams:
    """Short rate as a sum of independent CIR factors."""

    factors: tuple[CIRFactor, ...] = field(default_factory=tuple)
    family = "multi_cir"

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("need at least one factor")


# --- price <-> yield ----------------------------------------------------------

def yield_from_price(P, tau):
    """Continuously compounded yield R = -ln(P)/tau."""
    P = np.asarray(P, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(P <= 0):
        raise DomainError("price must be positive")
    if np.any(tau <= 0):
        raise DomainError("maturity must be positive")
    R = -np.log(P) / tau
    return R if R.ndim else float(R)


def price_from_yield(R, tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise DomainError("maturity must be nonnegative")
    P = np.exp(-np.asarray(R, dtype=float) * tau)
    return P if P.ndim else float(P)


# --- JSON --------------------------------------------------------------------

_ONE_FACTOR = {
    "ckls": CKLSParams,
    "black_karasinski": BlackKarasinskiParams,
    "ait_sahalia": AitSahaliaDriftParams,
}


def model_to_dict(model) -> dict:
    if isinstance(model, MultiCIRParams):
        return {"family": "multi_cir", "factors": [asdict(f) for f in model.factors]}
    d = {"family": model.family}
    d.update(asdict(model))
    return d


def model_from_dict(d: dict):
    d = dict(d)
    fam = d.pop("family", None)
    if fam in ("vasicek", "cir", "dothan"):
        gamma = {"vasicek": 0.0, "cir": 0.5, "dothan": 1.0}[fam]
        d.setdefault("gamma", gamma)
        if fam == "dothan":
            d.setdefault("alpha", 0.0)
        return CKLSParams(**d)
    if fam in _ONE_FACTOR:
        return _ONE_FACTOR[fam](**d)
    if fam == "convergence":
        return ConvergenceModel(**d)
    if fam == "fong_vasicek":
        return FongVasicekParams(**d)
    if fam == "multi_cir":
        return MultiCIRParams(tuple(CIRFactor(**f) for f in d["factors"]))
    raise ValueError(f"unknown model family {fam!r}")


def dumps(model) -> str:
    return json.dumps(model_to_dict(model))


def loads(text: str):
    return model_from_dict(json.loads(text))
