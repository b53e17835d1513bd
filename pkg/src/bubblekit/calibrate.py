"""Quasi-maximum-likelihood calibration of (b, α, ψ) to a yield series.

The quasi-likelihood is the exact Gaussian log-density of the Euler step
γ_t | γ_{t-1} ~ N(γ_{t-1} + (b - αγ_{t-1})Δs, ψ²γ_{t-1}Δs), including the
ln 2π constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lbfgsb
from .errors import ValidationError
from .model import YieldParams
from .sde import SeriesSample

MIN_SERIES_LENGTH = 30
DEFAULT_BOUNDS = ((0.0, 100.0), (0.0, 100.0), (0.0, 100.0))
DEFAULT_INIT = (0.01, 0.01, 0.01)
HESSIAN_REL_STEP = 1e-4


@dataclass(frozen=True)
class YieldSeries:
    series: SeriesSample
    earnings: float


def yield_series_from_prices(prices: SeriesSample, gamma0: float) -> YieldSeries:
    """Fix E = γ0·P_0 and map prices to yields γ_t = E/P_t."""
    p = prices.values
    if np.any(p <= 0):
        bad = int(np.flatnonzero(p <= 0)[0])
        raise ValidationError(f"price at index {bad} is not positive ({p[bad]})")
    if not (math.isfinite(gamma0) and gamma0 > 0):
        raise ValidationError(f"gamma0 must be > 0, got {gamma0}")
    earnings = gamma0 * float(p[0])
    return YieldSeries(SeriesSample(earnings / p, prices.dt, prices.t0), earnings)


def _theta(theta) -> tuple[float, float, float]:
    if isinstance(theta, YieldParams):
        return theta.as_tuple()
    b, alpha, psi = (float(x) for x in theta)
    return b, alpha, psi


def _pieces(series: SeriesSample, theta):
    b, alpha, psi = _theta(theta)
    if not psi > 0:
        raise ValidationError(f"psi must be > 0, got {psi}")
    g = series.values[:-1]
    if np.any(g <= 0):
        raise ValidationError("yield series must be strictly positive")
    ds = series.dt
    r = np.diff(series.values) - ds * (b - alpha * g)
    return b, alpha, psi, g, ds, r


def quasi_loglik(series: SeriesSample, theta) -> float:
    _, _, psi, g, ds, r = _pieces(series, theta)
    var = psi**2 * g * ds
    return -0.5 * float(np.sum(np.log(2.0 * math.pi * var) + r * r / var))


def quasi_loglik_grad(series: SeriesSample, theta) -> np.ndarray:
    """Analytic gradient in (b, α, ψ)."""
    _, _, psi, g, ds, r = _pieces(series, theta)
    w = r / (psi**2 * g)
    return np.array(
        [
            float(np.sum(w)),
            -float(np.sum(w * g)),
            float(np.sum(-1.0 / psi + r * r / (psi**3 * g * ds))),
        ]
    )


@dataclass(frozen=True)
class DerivedReport:
    gamma_star_hat: float | None
    p_star_hat: float | None
    phi_hat: float | None
    h_hat: float | None
    p_dagger_hat: float | None
    explosive: bool | None
    note: str = ""


def derived_report(theta_hat, earnings: float) -> DerivedReport:
    """γ̂*, P̂*, Ĥ, φ̂ and P̂† = φ̂P̂* from fitted parameters."""
    b, alpha, psi = _theta(theta_hat)
    if not alpha > 0:
        return DerivedReport(None, None, None, None, None, None, "alpha at zero: no mean reversion")
    gamma_star = b / alpha
    p_star = earnings / gamma_star if gamma_star > 0 else math.inf
    h = 2.0 * alpha * earnings / psi**2 if psi > 0 else math.inf
    explosive = 2.0 * alpha * gamma_star <= psi**2
    if psi == 0:
        phi = 1.0
    elif gamma_star > 0:
        ratio = psi**2 / (2.0 * alpha * gamma_star)
        phi = 1.0 / (1.0 - ratio) if ratio < 1.0 else math.inf
    else:
        phi = math.inf
    p_dagger = phi * p_star
    note = "explosive regime: long-run mean price is infinite" if explosive else ""
    return DerivedReport(gamma_star, p_star, phi, h, p_dagger, explosive, note)


@dataclass(frozen=True)
class FitResult:
    theta_hat: tuple[float, float, float]
    stderr: tuple[float, float, float] | None
    loglik: float
    derived: DerivedReport | None
    iterations: int
    converged: bool
    gradient_norm: float
    message: str
    n_obs: int
    dt: float
    loglik_history: tuple[float, ...] = ()

    @property
    def params(self) -> YieldParams:
        return YieldParams(*self.theta_hat)


def numeric_hessian(series: SeriesSample, theta, rel_step: float = HESSIAN_REL_STEP) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrized."""
    theta = np.asarray(_theta(theta), dtype=float)
    hess = np.empty((3, 3))
    for j in range(3):
        h = rel_step * max(abs(theta[j]), 1e-8)
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        hess[:, j] = (quasi_loglik_grad(series, up) - quasi_loglik_grad(series, dn)) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def standard_errors(series: SeriesSample, theta) -> tuple[float, float, float] | None:
    """Square roots of the inverse observed information diagonal, or None when it is not positive definite."""
    info = -numeric_hessian(series, theta)
    try:
        np.linalg.cholesky(info)
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(cov)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0):
        return None
    return tuple(float(x) for x in np.sqrt(diag))


def fit_qmle(
    series: SeriesSample,
    bounds=DEFAULT_BOUNDS,
    init=DEFAULT_INIT,
    earnings: float | None = None,
    max_iter: int = 500,
) -> FitResult:
    """Maximize the quasi-log-likelihood over a box with the in-repo L-BFGS-B.

    ``series.dt`` is the sampling step. When ``earnings`` is given the
    derived price-level report is attached.
    """
    if len(series) < MIN_SERIES_LENGTH:
        raise ValidationError(f"need at least {MIN_SERIES_LENGTH} observations, got {len(series)}")
    if np.any(series.values <= 0):
        raise ValidationError("yield series must be strictly positive")
    lower = np.array([lo for lo, _ in bounds], dtype=float)
    upper = np.array([hi for _, hi in bounds], dtype=float)
    if lower.size != 3 or np.any(lower > upper):
        raise ValidationError("bounds must be three (low, high) pairs with low <= high")

    def objective(x):
        if not x[2] > 0:
            return math.inf, np.full(3, np.nan)
        return -quasi_loglik(series, x), -quasi_loglik_grad(series, x)

    res = lbfgsb.minimize(objective, init, lower, upper, memory=10, max_iter=max_iter)
    theta = tuple(float(v) for v in res.x)
    stderr = standard_errors(series, theta) if theta[2] > 0 else None
    derived = derived_report(theta, earnings) if earnings is not None else None
    return FitResult(
        theta_hat=theta,
        stderr=stderr,
        loglik=-res.fun,
        derived=derived,
        iterations=res.iterations,
        converged=res.converged,
        gradient_norm=res.projected_grad_norm,
        message=res.message,
        n_obs=series.n,
        dt=series.dt,
        loglik_history=tuple(-f for f in res.history),
    )

