"""Parameter algebra of the yield/price model.

The yield follows dγ = (b - αγ) dt + ψ √γ dW and the price is P = E/γ with
constant earnings E.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DivergentMomentError, RegimeError, ValidationError
from .specfun import ln_gamma


@dataclass(frozen=True, slots=True)
class YieldParams:
    b: float
    alpha: float
    psi: float

    def __post_init__(self):
        for name in ("b", "alpha", "psi"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{name} must be finite")
        if self.b < 0:
            raise ValidationError(f"b must be >= 0, got {self.b}")
        if self.alpha <= 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")
        if self.psi <= 0:
            raise ValidationError(f"psi must be > 0, got {self.psi}")

    @classmethod
    def from_gamma_star(cls, alpha: float, gamma_star: float, psi: float) -> YieldParams:
        return cls(b=alpha * gamma_star, alpha=alpha, psi=psi)

    @property
    def gamma_star(self) -> float:
        return self.b / self.alpha

    @property
    def q(self) -> float:
        """Bessel order 2b/ψ² - 1 of the transition density."""
        return 2.0 * self.b / self.psi**2 - 1.0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.b, self.alpha, self.psi)


@dataclass(frozen=True, slots=True)
class PriceContext:
    """Anchor of the bijection P = E/γ at t = 0."""

    earnings: float
    gamma0: float
    p0: float

    def __post_init__(self):
        for name in ("earnings", "gamma0", "p0"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {v}")
        if abs(self.p0 * self.gamma0 - self.earnings) > 1e-12 * self.earnings:
            raise ValidationError("p0 * gamma0 must equal earnings")

    @classmethod
    def from_price(cls, earnings: float, p0: float) -> PriceContext:
        return cls(earnings=earnings, gamma0=earnings / p0, p0=p0)

    def p_star(self, params: YieldParams) -> float:
        if params.b == 0:
            return math.inf
        return self.earnings / params.gamma_star

    def h_threshold(self, params: YieldParams) -> float:
        return 2.0 * params.alpha * self.earnings / params.psi**2

    def mu_star(self, params: YieldParams) -> float:
        return 2.0 * params.b / params.psi**2


class Regime(str, Enum):
    NON_EXPLOSIVE = "non_explosive"
    RECURRENT_EXPLOSIVE = "explosive"


def classify_regime(params: YieldParams) -> Regime:
    # 2αγ* = 2b; the boundary belongs to the explosive side
    if 2.0 * params.b > params.psi**2:
        return Regime.NON_EXPLOSIVE
    return Regime.RECURRENT_EXPLOSIVE


def _premium_ratio(params: YieldParams) -> float:
    # P*/H, which does not depend on E
    if params.b == 0:
        return math.inf
    return params.psi**2 / (2.0 * params.b)


def amplification_phi(params: YieldParams) -> float:
    """Long-run expected price over P*, i.e. (1 - P*/H)^-1."""
    r = _premium_ratio(params)
    if r >= 1.0:
        raise DivergentMomentError(f"P*/H = {r:.6g} >= 1: the stationary mean price is infinite")
    return 1.0 / (1.0 - r)


def emergent_premium(params: YieldParams) -> float:
    r = _premium_ratio(params)
    if r >= 1.0:
        raise DivergentMomentError(f"P*/H = {r:.6g} >= 1: the stationary mean price is infinite")
    return -math.log1p(-r)


def _inverse_gamma_shape_scale(params: YieldParams, ctx: PriceContext) -> tuple[float, float]:
    if params.b == 0:
        raise RegimeError("b = 0 has no stationary price distribution")
    return ctx.mu_star(params), ctx.h_threshold(params)


def stationary_logpdf(p, params: YieldParams, ctx: PriceContext):
    mu, h = _inverse_gamma_shape_scale(params, ctx)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ValidationError("price must be > 0")
    out = mu * math.log(h) - ln_gamma(mu) - h / p - (1.0 + mu) * np.log(p)
    return out if out.ndim else float(out)


def stationary_pdf(p, params: YieldParams, ctx: PriceContext):
    """Invariant price density: inverse-gamma with shape μ* and scale H."""
    out = np.exp(stationary_logpdf(p, params, ctx))
    return out if np.ndim(out) else float(out)


def sample_stationary(n: int, params: YieldParams, ctx: PriceContext, rng: np.random.Generator) -> np.ndarray:
    mu, h = _inverse_gamma_shape_scale(params, ctx)
    return h / rng.gamma(mu, 1.0, size=n)


@dataclass(frozen=True, slots=True)
class StationaryMoments:
    mean_return: float
    var_return: float


def stationary_moments(params: YieldParams, ctx: PriceContext) -> StationaryMoments:
    """Long-run mean and variance of R = P/P0; infinite values are returned as math.inf."""
    r = _premium_ratio(params)
    base = ctx.p_star(params) / ctx.p0
    if r >= 1.0:
        return StationaryMoments(math.inf, math.inf)
    phi = 1.0 / (1.0 - r)
    mean = base * phi
    if 2.0 * r >= 1.0:
        return StationaryMoments(mean, math.inf)
    var = base**2 * phi * (1.0 / (1.0 - 2.0 * r) - phi)
    return StationaryMoments(mean, var)
