"""φ-divergence tests of the CIR yield model against BM, GBM and CKLS.

For each step the alternative and null Euler transition densities give a
likelihood ratio x_t; the statistic is T = 2n · mean φ(x_t), compared with a
χ² law.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import lbfgsb
from .calibrate import FitResult
from .errors import ValidationError
from .sde import CKLS_V_MAX, Model, SeriesSample, check_params, diffusion, drift
from .specfun import chi2_sf

DEFAULT_DF = 4
CKLS_V_MIN = 1e-3
CKLS_V_INIT = 0.5
ALTERNATIVES = (Model.BM, Model.GBM, Model.CKLS)


class DivergenceKind(str, Enum):
    KL = "KL"
    BS = "BS"
    RK = "RK"

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        if self is DivergenceKind.KL:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)) - x + 1.0, 1.0)
        if self is DivergenceKind.BS:
            return ((x - 1.0) / (x + 1.0)) ** 2
        # (sqrt(x) - 1)^2; the variant with 2x has phi(1) = 1
        return -2.0 * np.sqrt(x) + x + 1.0

    def phi_of_log_ratio(self, log_x):
        """φ(e^L) evaluated without forming e^L where that would overflow."""
        log_x = np.asarray(log_x, dtype=float)
        if self is DivergenceKind.KL:
            # a ratio beyond e^709 is reported as an infinite divergence
            with np.errstate(over="ignore"):
                x = np.exp(log_x)
            return x * (log_x - 1.0) + 1.0
        if self is DivergenceKind.BS:
            # (x-1)/(x+1) = tanh(L/2)
            return np.tanh(0.5 * log_x) ** 2
        with np.errstate(over="ignore"):
            return np.expm1(0.5 * log_x) ** 2


def euler_log_density(model: Model, params, x_prev, x_next, dt: float):
    """Log of the Gaussian Euler transition density, elementwise."""
    model = Model(model)
    x_prev = np.asarray(x_prev, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    var = diffusion(model, params, x_prev) ** 2 * dt
    if np.any(~(var > 0)):
        raise ValidationError(f"{model.value} transition variance is not positive for some states")
    r = x_next - x_prev - drift(model, params, x_prev) * dt
    out = -0.5 * (np.log(2.0 * math.pi * var) + r * r / var)
    return out if out.ndim else float(out)


def euler_transition_density(model: Model, params, x_prev, x_next, dt: float):
    out = np.exp(euler_log_density(model, params, x_prev, x_next, dt))
    return out if np.ndim(out) else float(out)


def step_log_ratios(series: SeriesSample, model_alt: Model, theta_alt, theta_null) -> np.ndarray:
    x = series.values
    alt = euler_log_density(model_alt, theta_alt, x[:-1], x[1:], series.dt)
    null = euler_log_density(Model.CIR, theta_null, x[:-1], x[1:], series.dt)
    return alt - null


def empirical_divergence(series: SeriesSample, theta_alt, theta_null, model_alt: Model, kind: DivergenceKind) -> float:
    """Sample mean of φ(p_alt/p_null) over the series' transitions."""
    kind = DivergenceKind(kind)
    vals = kind.phi_of_log_ratio(step_log_ratios(series, Model(model_alt), theta_alt, theta_null))
    return float(np.mean(vals))


@dataclass(frozen=True)
class AltFit:
    model: Model
    theta: tuple[float, ...]
    loglik: float
    converged: bool
    message: str = ""


def _loglik(model: Model, theta, series: SeriesSample) -> float:
    x = series.values
    return float(np.sum(euler_log_density(model, theta, x[:-1], x[1:], series.dt)))


def fit_bm(series: SeriesSample) -> AltFit:
    dx = np.diff(series.values)
    dt = series.dt
    b = float(np.mean(dx)) / dt
    psi = math.sqrt(float(np.mean((dx - b * dt) ** 2)) / dt)
    theta = (b, psi)
    return AltFit(Model.BM, theta, _loglik(Model.BM, theta, series), psi > 0)


def fit_gbm(series: SeriesSample) -> AltFit:
    x = series.values
    if np.any(x[:-1] <= 0):
        return AltFit(Model.GBM, (math.nan, math.nan), -math.inf, False, "GBM needs a positive series")
    rel = np.diff(x) / x[:-1]
    dt = series.dt
    alpha = -float(np.mean(rel)) / dt
    psi = math.sqrt(float(np.mean((rel + alpha * dt) ** 2)) / dt)
    theta = (alpha, psi)
    return AltFit(Model.GBM, theta, _loglik(Model.GBM, theta, series), psi > 0)


def _ckls_objective(series: SeriesSample):
    g = series.values[:-1]
    dx = np.diff(series.values)
    dt = series.dt
    log_g = np.log(g)

    def fun(theta):
        b, alpha, psi, v = theta
        if not psi > 0:
            return math.inf, np.full(4, np.nan)
        s2 = psi**2 * np.exp(2.0 * v * log_g)
        r = dx - dt * (b - alpha * g)
        q = r * r / (s2 * dt)
        ll = -0.5 * float(np.sum(np.log(2.0 * math.pi * s2 * dt) + q))
        w = r / s2
        grad = np.array(
            [
                float(np.sum(w)),
                -float(np.sum(w * g)),
                float(np.sum(q - 1.0)) / psi,
                float(np.sum((q - 1.0) * log_g)),
            ]
        )
        return -ll, -grad

    return fun


def fit_ckls(series: SeriesSample, null_theta, bounds=None) -> AltFit:
    """QMLE of (b, α, ψ, v), started from the CIR fit at v = 1/2."""
    if np.any(series.values[:-1] <= 0):
        return AltFit(Model.CKLS, (math.nan,) * 4, -math.inf, False, "CKLS needs a positive series")
    if bounds is None:
        bounds = ((0.0, 100.0), (0.0, 100.0), (0.0, 100.0))
    lower = np.array([lo for lo, _ in bounds] + [CKLS_V_MIN])
    upper = np.array([hi for _, hi in bounds] + [CKLS_V_MAX])
    init = np.array(list(null_theta) + [CKLS_V_INIT])
    res = lbfgsb.minimize(_ckls_objective(series), init, lower, upper, memory=10, max_iter=500)
    return AltFit(Model.CKLS, tuple(float(v) for v in res.x), -res.fun, res.converged, res.message)


def fit_alternative(series: SeriesSample, model: Model, null_theta) -> AltFit:
    model = Model(model)
    if model is Model.BM:
        return fit_bm(series)
    if model is Model.GBM:
        return fit_gbm(series)
    if model is Model.CKLS:
        return fit_ckls(series, null_theta)
    raise ValidationError(f"{model.value} is not an alternative model")


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class DivergenceReport:
    alternative: Model
    kind: DivergenceKind
    statistic: float
    df: int
    p_value: float
    theta_null: tuple[float, ...]
    theta_alt: tuple[float, ...]
    n: int
    valid: bool = True
    message: str = ""

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value) if self.valid else ""

    def rejects(self, level: float = 0.05) -> bool:
        return self.valid and self.p_value < level


def _report(series: SeriesSample, null_theta, alt: AltFit, kind: DivergenceKind, df: int) -> DivergenceReport:
    if not alt.converged:
        return DivergenceReport(
            alt.model, kind, math.nan, df, math.nan, tuple(null_theta), alt.theta, series.n,
            valid=False, message=alt.message or "alternative fit did not converge",
        )
    d_emp = empirical_divergence(series, alt.theta, null_theta, alt.model, kind)
    stat = 2.0 * series.n * d_emp
    p = chi2_sf(stat, df) if math.isfinite(stat) else 0.0
    return DivergenceReport(alt.model, kind, stat, df, p, tuple(null_theta), alt.theta, series.n)


def _check_df(df: int) -> int:
    if int(df) != df or df < 1:
        raise ValidationError(f"df must be a positive integer, got {df}")
    return int(df)


def run_test(
    series: SeriesSample,
    null_fit: FitResult,
    alternative: Model,
    kind: DivergenceKind,
    df_override: int | None = None,
) -> DivergenceReport:
    df = _check_df(DEFAULT_DF if df_override is None else df_override)
    null_theta = check_params(Model.CIR, null_fit.theta_hat)
    alt = fit_alternative(series, alternative, null_theta)
    return _report(series, null_theta, alt, DivergenceKind(kind), df)


def run_matrix(
    series: SeriesSample,
    null_fit: FitResult,
    df_override: int | None = None,
    max_workers: int = 1,
) -> list[DivergenceReport]:
    """All alternative × kind cells; each alternative is fitted once."""
    df = _check_df(DEFAULT_DF if df_override is None else df_override)
    null_theta = check_params(Model.CIR, null_fit.theta_hat)

    def fit(model):
        return fit_alternative(series, model, null_theta)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, len(ALTERNATIVES))) as pool:
            fits = list(pool.map(fit, ALTERNATIVES))
    else:
        fits = [fit(m) for m in ALTERNATIVES]
    return [_report(series, null_theta, alt, kind, df) for alt in fits for kind in DivergenceKind]
