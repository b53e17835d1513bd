"""Bound-constrained limited-memory BFGS.

Each iteration finds the generalized Cauchy point of the quadratic model along
the projected steepest-descent path, minimizes the model over the variables
still free there, and runs a strong-Wolfe line search along the resulting
direction, capped at the box. The quasi-Newton matrix is kept in compact form
B = θI - W M Wᵀ built from the last ``memory`` correction pairs. Problems here
have a handful of variables so B is materialized densely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FunGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

C1 = 1e-4
C2 = 0.9
# approximate-Wolfe window used once f changes are at rounding level
APPROX_DELTA = 0.1
NOISE_REL = 1e-12


@dataclass(frozen=True)
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    projected_grad_norm: float
    message: str
    history: tuple[float, ...] = field(default=())


def projected_gradient(x, g, lower, upper) -> np.ndarray:
    return np.clip(x - g, lower, upper) - x


def _compact_matrix(s_list, y_list, theta, n) -> np.ndarray:
    if not s_list:
        return theta * np.eye(n)
    S = np.column_stack(s_list)
    Y = np.column_stack(y_list)
    SY = S.T @ Y
    D = np.diag(np.diag(SY))
    L = np.tril(SY, -1)
    W = np.hstack([Y, theta * S])
    middle = np.block([[-D, L.T], [L, theta * (S.T @ S)]])
    return theta * np.eye(n) - W @ np.linalg.solve(middle, W.T)


def cauchy_point(x, g, B, lower, upper) -> tuple[np.ndarray, np.ndarray]:
    """Minimizer of the quadratic model along the projected path x(t) = P(x - t g).

    Returns the point and a mask of variables that reached a bound.
    """
    n = x.size
    brk = np.full(n, np.inf)
    neg, pos = g < 0, g > 0
    brk[neg] = (x[neg] - upper[neg]) / g[neg]
    brk[pos] = (x[pos] - lower[pos]) / g[pos]
    d = np.where(brk > 0, -g, 0.0)
    fixed = brk <= 0
    xc = x.copy()
    z = np.zeros(n)  # xc - x so far
    t_old = 0.0
    for i in np.argsort(brk, kind="stable"):
        if brk[i] <= 0:
            continue
        # model along z + s d for s in [0, brk_i - t_old]
        fp = g @ d + z @ B @ d
        fpp = d @ B @ d
        seg = brk[i] - t_old
        if fp >= 0:
            return xc, fixed
        if fpp > 0 and -fp / fpp < seg:
            z = z + (-fp / fpp) * d
            return np.clip(x + z, lower, upper), fixed
        if not math.isfinite(seg):
            break
        z = z + seg * d
        xc = np.clip(x + z, lower, upper)
        z = xc - x
        d[i] = 0.0
        fixed[i] = True
        t_old = brk[i]
    if np.any(d != 0):
        # unbounded direction with nonpositive curvature cannot happen for B > 0
        fp = g @ d + z @ B @ d
        fpp = d @ B @ d
        if fp < 0 and fpp > 0:
            z = z + (-fp / fpp) * d
    return np.clip(x + z, lower, upper), fixed


def subspace_step(x, g, B, xc, fixed, lower, upper) -> np.ndarray:
    """Minimize the model over free variables from xc, backtracking into the box."""
    free = ~fixed & (xc > lower) & (xc < upper)
    if not np.any(free):
        return xc
    r = g + B @ (xc - x)
    Bff = B[np.ix_(free, free)]
    try:
        du = -np.linalg.solve(Bff, r[free])
    except np.linalg.LinAlgError:
        return xc
    step = 1.0
    xf = xc[free]
    lo, hi = lower[free], upper[free]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(du > 0, (hi - xf) / du, np.where(du < 0, (lo - xf) / du, np.inf))
    step = min(1.0, float(np.min(ratio)))
    out = xc.copy()
    out[free] = xf + step * du
    return np.clip(out, lower, upper)


def _max_step(x, p, lower, upper) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0, (upper - x) / p, np.where(p < 0, (lower - x) / p, np.inf))
    return float(np.min(ratio))


def _cubic_min(a, fa, ga, b, fb, gb) -> float | None:
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - ga * gb
    if rad < 0:
        return None
    d2 = math.copysign(math.sqrt(rad), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def line_search(fun: FunGrad, x, f0, g0, p, stp_max, stp0=1.0, max_evals=40):
    """Strong-Wolfe search on φ(s) = f(x + s p) for s in (0, stp_max].

    Once f differences sink into rounding noise, steps are accepted on the
    approximate-Wolfe slope test instead of the sufficient-decrease test.
    Returns (step, f, g, evals) or None if no acceptable step was found.
    """
    dphi0 = float(g0 @ p)
    evals = 0
    noise = NOISE_REL * (1.0 + abs(f0))

    def approx_wolfe(f, d):
        # decrease too small to see in f, so judge the step by its slope;
        # f may move only within its rounding band
        return (
            abs(f - f0) <= noise
            and C2 * dphi0 <= d <= (2.0 * APPROX_DELTA - 1.0) * dphi0
        )

    def phi(s):
        nonlocal evals
        evals += 1
        xs = x + s * p
        f, g = fun(xs)
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            return math.inf, None, math.nan
        return f, g, float(g @ p)

    def zoom(lo, f_lo, d_lo, g_lo, hi, f_hi, d_hi):
        best = None if lo == 0 else (lo, f_lo, g_lo)
        while evals < max_evals:
            s = None
            if math.isfinite(f_hi) and math.isfinite(d_hi):
                s = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            a, b = min(lo, hi), max(lo, hi)
            if s is None or not (a + 0.1 * (b - a) <= s <= b - 0.1 * (b - a)):
                s = 0.5 * (lo + hi)
            f, g, d = phi(s)
            if approx_wolfe(f, d):
                return s, f, g
            if abs(f - f0) <= noise and math.isfinite(d):
                # comparisons of f are meaningless here; bracket on the slope
                if d >= 0:
                    hi, f_hi, d_hi = s, f, d
                else:
                    lo, f_lo, d_lo = s, f, d
            elif f > f0 + C1 * s * dphi0 or f >= f_lo:
                hi, f_hi, d_hi = s, f, d
            else:
                if abs(d) <= -C2 * dphi0:
                    return s, f, g
                best = (s, f, g)
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = s, f, d
            if abs(hi - lo) <= 1e-12 * max(1.0, abs(lo)):
                break
        return best

    s_prev, f_prev, d_prev, g_prev = 0.0, f0, dphi0, g0
    s = min(stp0, stp_max)
    while evals < max_evals:
        f, g, d = phi(s)
        if approx_wolfe(f, d):
            return s, f, g, evals
        if f > f0 + C1 * s * dphi0 or (evals > 1 and f >= f_prev):
            res = zoom(s_prev, f_prev, d_prev, g_prev, s, f, d)
            return None if res is None else (*res, evals)
        if abs(d) <= -C2 * dphi0:
            return s, f, g, evals
        if d >= 0:
            res = zoom(s, f, d, g, s_prev, f_prev, d_prev)
            return None if res is None else (*res, evals)
        if s >= stp_max:
            # the box stops us while still descending: take the boundary point
            return s, f, g, evals
        s_prev, f_prev, d_prev, g_prev = s, f, d, g
        s = min(2.0 * s, stp_max)
    return None


def minimize(
    fun: FunGrad,
    x0,
    lower,
    upper,
    memory: int = 10,
    max_iter: int = 500,
    gtol: float = 1e-8,
) -> OptimizeResult:
    """Minimize ``fun`` over the box [lower, upper].

    ``fun`` returns (value, gradient). Convergence is declared when the
    projected gradient's ∞-norm is at most ``gtol * (1 + |f|)``.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    n = x.size
    f, g = fun(x)
    if not math.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    theta = 1.0
    history = [f]
    message = "maximum iterations reached"
    it = 0
    pg = np.inf
    for it in range(1, max_iter + 1):
        pg = float(np.max(np.abs(projected_gradient(x, g, lower, upper))))
        if pg <= gtol * (1.0 + abs(f)):
            message = "projected gradient below tolerance"
            it -= 1
            break
        p = None
        for attempt in range(2):
            B = _compact_matrix(s_list, y_list, theta, n)
            xc, fixed = cauchy_point(x, g, B, lower, upper)
            xbar = subspace_step(x, g, B, xc, fixed, lower, upper)
            p = xbar - x
            if g @ p < 0:
                break
            # model went bad: restart from steepest descent
            s_list.clear()
            y_list.clear()
            theta = 1.0
            p = None
        if p is None:
            message = "no descent direction"
            break
        stp_max = _max_step(x, p, lower, upper)
        stp0 = 1.0
        if not s_list:
            stp0 = min(1.0, 1.0 / max(float(np.linalg.norm(p)), 1e-300))
        res = line_search(fun, x, f, g, p, stp_max, stp0)
        if res is None:
            if s_list:
                s_list.clear()
                y_list.clear()
                theta = 1.0
                continue
            message = "line search failed"
            break
        step, f_new, g_new, _ = res
        x_new = np.clip(x + step * p, lower, upper)
        s_vec, y_vec = x_new - x, g_new - g
        sy = float(s_vec @ y_vec)
        if sy > 2.2e-16 * float(y_vec @ y_vec):
            s_list.append(s_vec)
            y_list.append(y_vec)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
            theta = float(y_vec @ y_vec) / sy
        x, f, g = x_new, f_new, g_new
        history.append(f)
    else:
        pg = float(np.max(np.abs(projected_gradient(x, g, lower, upper))))
    pg = float(np.max(np.abs(projected_gradient(x, g, lower, upper))))
    converged = pg <= gtol * (1.0 + abs(f))
    if converged:
        message = "projected gradient below tolerance"
    return OptimizeResult(
        x=x, fun=f, grad=g, iterations=it, converged=converged,
        projected_grad_norm=pg, message=message, history=tuple(history),
    )
