"""Transition density, conditional moments and super-exponential diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoSignChangeError, RegimeError, ValidationError
from .model import PriceContext, Regime, YieldParams, classify_regime
from .specfun import ln_gamma, log_bessel_i, log_kummer_1f1

# below this the law of P_t is numerically a point mass at P0
T_MIN = 1e-8

TC_T_LO = 1.0
TC_T_HI = 1e6
TC_GRID_RATIO = 1.25

# error model for the super-exponential margin: rounding per term and the
# relative accuracy of the Kummer function behind Ω
MARGIN_ROUNDING = 8.0 * 2.220446049250313e-16
OMEGA_RTOL = 1e-10


@dataclass(frozen=True, slots=True)
class TransitionCoeffs:
    c: float
    u: float
    v: float
    q: float
    log_u: float


def _log_expm1(x: float) -> float:
    """ln(e^x - 1) for x > 0 without overflow."""
    if x > 30.0:
        return x + math.log1p(-math.exp(-x))
    return math.log(math.expm1(x))


def _check_t(t: float):
    if not t >= T_MIN:
        raise ValidationError(f"t must be >= {T_MIN}, got {t}")


def transition_coeffs(t: float, p_t: float, params: YieldParams, ctx: PriceContext) -> TransitionCoeffs:
    _check_t(t)
    h = ctx.h_threshold(params)
    at = params.alpha * t
    one_minus = -math.expm1(-at)
    log_u = math.log(h / ctx.p0) - _log_expm1(at)
    return TransitionCoeffs(
        c=one_minus / h,
        u=math.exp(log_u),
        v=(h / p_t) / one_minus,
        q=params.q,
        log_u=log_u,
    )


def _log_scaled_bessel(q: float, log_u: float, log_v: float) -> float:
    """ln(u^{-q/2} I_q(2 sqrt(uv))), finite even when u underflows."""
    log_x = math.log(2.0) + 0.5 * (log_u + log_v)
    if log_x < -300.0:
        return 0.5 * q * log_v - ln_gamma(q + 1.0)
    return log_bessel_i(q, math.exp(log_x)).log_magnitude - 0.5 * q * log_u


def _check_order(q: float):
    if not q > -1.0:
        raise RegimeError(f"Bessel order q = {q:.6g} must exceed -1 (needs b > 0)")


def log_transition_pdf(p_t: float, t: float, params: YieldParams, ctx: PriceContext) -> float:
    if not p_t > 0:
        raise ValidationError("p_t must be > 0")
    k = transition_coeffs(t, p_t, params, ctx)
    _check_order(k.q)
    log_v = math.log(k.v)
    return math.log(k.c) - (k.u + k.v) + (0.5 * k.q + 2.0) * log_v + _log_scaled_bessel(k.q, k.log_u, log_v)


def transition_pdf(p_t: float, t: float, params: YieldParams, ctx: PriceContext) -> float:
    """Density of P_t given P_0 = ctx.p0 after time ``t``."""
    return math.exp(log_transition_pdf(p_t, t, params, ctx))


def log_cir_transition_pdf(g_t: float, t: float, g0: float, params: YieldParams) -> float:
    _check_t(t)
    if not (g_t > 0 and g0 > 0):
        raise ValidationError("yields must be > 0")
    q = params.q
    _check_order(q)
    at = params.alpha * t
    log_d = math.log(2.0 * params.alpha / params.psi**2) - math.log(-math.expm1(-at))
    log_u = log_d + math.log(g0) - at
    log_v = log_d + math.log(g_t)
    u, v = math.exp(log_u), math.exp(log_v)
    return log_d - (u + v) + 0.5 * q * log_v + _log_scaled_bessel(q, log_u, log_v)


def cir_transition_pdf(g_t: float, t: float, g0: float, params: YieldParams) -> float:
    """Noncentral chi-square transition density of the yield."""
    return math.exp(log_cir_transition_pdf(g_t, t, g0, params))


def _moment_inputs(t: float, params: YieldParams, ctx: PriceContext) -> tuple[float, float, float]:
    _check_t(t)
    q = params.q
    if q < 0:
        raise RegimeError(f"H < P* (q = {q:.6g}): the conditional mean is not defined")
    h = ctx.h_threshold(params)
    at = params.alpha * t
    log_c = math.log(-math.expm1(-at)) - math.log(h)
    u = math.exp(math.log(h / ctx.p0) - _log_expm1(at))
    return q, log_c, u


def log_expected_price(t: float, params: YieldParams, ctx: PriceContext) -> float:
    """ln E[P_t | P_0]; +inf when H = P*."""
    q, log_c, u = _moment_inputs(t, params, ctx)
    if q == 0:
        return math.inf
    # e^{-u} 1F1(q, q+1, u) = 1F1(1, q+1, -u)
    return log_kummer_1f1(1.0, q + 1.0, -u).log_magnitude - log_c - math.log(q)


def cond_mean_return(t: float, params: YieldParams, ctx: PriceContext) -> float:
    """E[P_t/P_0 | P_0]."""
    return math.exp(log_expected_price(t, params, ctx) - math.log(ctx.p0))


def cond_var_return(t: float, params: YieldParams, ctx: PriceContext) -> float:
    """Var[P_t/P_0 | P_0]; math.inf when q <= 1 (second moment diverges)."""
    q, log_c, u = _moment_inputs(t, params, ctx)
    if q <= 1.0:
        return math.inf
    log_p0 = math.log(ctx.p0)
    log_m1 = log_kummer_1f1(1.0, q + 1.0, -u).log_magnitude - log_c - math.log(q) - log_p0
    log_m2 = (
        log_kummer_1f1(2.0, q + 1.0, -u).log_magnitude
        - 2.0 * log_c
        - math.log(q)
        - math.log(q - 1.0)
        - 2.0 * log_p0
    )
    m2 = math.exp(log_m2)
    return max(m2 * -math.expm1(2.0 * log_m1 - log_m2), 0.0)


def _require_non_explosive(params: YieldParams):
    if classify_regime(params) is not Regime.NON_EXPLOSIVE:
        raise RegimeError("super-exponential diagnostics need the non-explosive regime")


def _margin_terms(params: YieldParams, ctx: PriceContext):
    q = params.q
    h = ctx.h_threshold(params)
    p0 = ctx.p0
    ea = math.exp(params.alpha)
    g = math.expm1(params.alpha)
    z = h / (p0 * g)
    # Ω = e^z q / 1F1(q, q+1, z), rewritten to avoid e^z overflow
    omega = q * math.exp(-log_kummer_1f1(1.0, q + 1.0, -z).log_magnitude)
    quad = g * ea * p0
    lin = ea * h + g * (1.0 + ea * q) * p0
    const = (ea + 1.0) * h + p0 * g * (q - 1.0)
    return omega, quad, lin, const


def superexp_margin(params: YieldParams, ctx: PriceContext) -> float:
    """Quadratic-in-Ω expression whose sign decides convexity of ln E[P_t] at t = 1."""
    _require_non_explosive(params)
    omega, quad, lin, const = _margin_terms(params, ctx)
    return -quad * omega**2 + lin * omega - const


def superexp_margin_error(params: YieldParams, ctx: PriceContext) -> float:
    """Bound on the rounding and Ω error in ``superexp_margin``.

    The three terms nearly cancel when H/P0 is large, so the bound can exceed
    the margin itself.
    """
    _require_non_explosive(params)
    omega, quad, lin, const = _margin_terms(params, ctx)
    size = quad * omega**2 + abs(lin * omega) + abs(const)
    slope = abs(lin - 2.0 * quad * omega)
    return MARGIN_ROUNDING * size + slope * omega * OMEGA_RTOL


def superexp_condition(params: YieldParams, ctx: PriceContext) -> bool:
    """Sign of the margin, or of the t = 1 curvature when the margin is unresolved."""
    margin = superexp_margin(params, ctx)
    if abs(margin) > superexp_margin_error(params, ctx):
        return margin > 0
    # same sign as the margin, and well conditioned
    return log_price_curvature(1.0, params, ctx) > 0


def log_price_curvature(t: float, params: YieldParams, ctx: PriceContext) -> float:
    """Central-difference d²/dt² ln E[P_t]."""
    h = max(1e-3, 1e-3 * t)
    lo = max(t - h, T_MIN)
    hi = t + h
    f_lo = log_expected_price(lo, params, ctx)
    f_mid = log_expected_price(t, params, ctx)
    f_hi = log_expected_price(hi, params, ctx)
    return 2.0 * ((f_hi - f_mid) / (hi - t) - (f_mid - f_lo) / (t - lo)) / (hi - lo)


def superexp_duration(params: YieldParams, ctx: PriceContext, rtol: float = 1e-4) -> float:
    """First time past t = 1 at which ln E[P_t] stops being convex."""
    if not superexp_condition(params, ctx):
        raise RegimeError("the super-exponential condition does not hold")
    lo = TC_T_LO
    f_lo = log_price_curvature(lo, params, ctx)
    if not f_lo > 0:
        raise NoSignChangeError(f"curvature at t = {lo} is not positive ({f_lo:.3g})")
    hi = lo
    while True:
        hi = lo * TC_GRID_RATIO
        if hi > TC_T_HI:
            raise NoSignChangeError(f"curvature stays positive over [{TC_T_LO}, {TC_T_HI}]")
        if log_price_curvature(hi, params, ctx) <= 0:
            break
        lo = hi
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if log_price_curvature(mid, params, ctx) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def expected_return_curve(times, params: YieldParams, ctx: PriceContext) -> np.ndarray:
    return np.array([cond_mean_return(float(t), params, ctx) for t in times])
