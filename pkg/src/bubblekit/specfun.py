"""Special functions used by the closed-form densities and moments.

Everything that can overflow (``I_q``, ``1F1``) is returned as a
:class:`LogValue` so callers can compose densities in log space and
exponentiate once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

__all__ = [
    "LogValue",
    "SpecialFunctionDomainError",
    "ln_gamma",
    "reg_lower_gamma",
    "chi2_sf",
    "log_bessel_i",
    "log_kummer_1f1",
]

_EPS = 1e-17
_MAX_SERIES_TERMS = 2_000_000

# Bessel: power series below this argument, asymptotic expansions above.
BESSEL_SERIES_LIMIT = 30.0
# Hankel expansion is used while nu^2 / (2 x) stays below this bound
# (bounds the transient growth of its terms); Debye uniform otherwise.
HANKEL_NU2_OVER_2X = 6.0
DEBYE_TERMS = 13
# Kummer: large-|x| asymptotic series is tried above this argument.
KUMMER_ASYMPTOTIC_MIN_X = 40.0


class SpecialFunctionDomainError(ValueError):
    """Argument outside the domain of a special function."""


@dataclass(frozen=True)
class LogValue:
    """A real number stored as ``sign * exp(log_magnitude)``."""

    log_magnitude: float
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 and self.log_magnitude != -math.inf:
            object.__setattr__(self, "log_magnitude", -math.inf)

    @classmethod
    def zero(cls) -> "LogValue":
        return cls(-math.inf, 0)

    @classmethod
    def from_float(cls, x: float) -> "LogValue":
        if x == 0:
            return cls.zero()
        return cls(math.log(abs(x)), 1 if x > 0 else -1)

    def __mul__(self, other: "LogValue") -> "LogValue":
        sign = self.sign * other.sign
        if sign == 0:
            return LogValue.zero()
        return LogValue(self.log_magnitude + other.log_magnitude, sign)

    def __truediv__(self, other: "LogValue") -> "LogValue":
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero LogValue")
        if self.sign == 0:
            return LogValue.zero()
        return LogValue(self.log_magnitude - other.log_magnitude, self.sign * other.sign)

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        if self.log_magnitude > 709.78:
            return self.sign * math.inf
        return self.sign * math.exp(self.log_magnitude)


# ---------------------------------------------------------------------------
# Gamma function family
# ---------------------------------------------------------------------------

def _zeta_int(k: int) -> float:
    """Riemann zeta at integer k >= 2 (Euler-Maclaurin from N = 20)."""
    n = 20
    s = math.fsum(j ** -k for j in range(1, n))
    # tail: N^{1-k}/(k-1) + N^{-k}/2 + sum_m B_{2m}/(2m)! (k)_{2m-1} N^{-k-2m+1}
    parts = [n ** (1 - k) / (k - 1), 0.5 * n ** -k]
    rising = float(k)
    for m, b2m in enumerate((1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66), start=1):
        if m > 1:
            rising *= (k + 2 * m - 3) * (k + 2 * m - 2)
        parts.append(b2m / math.factorial(2 * m) * rising * n ** (-k - 2 * m + 1))
    return s + math.fsum(parts)


_EULER_GAMMA = 0.57721566490153286061
# ln Gamma(1 + e) = -gamma_E e + sum_{k>=2} (-1)^k zeta(k) e^k / k
_LGAMMA1P_COEFFS = [(-1) ** k * _zeta_int(k) / k for k in range(2, 64)]


def _lgamma1p(e: float) -> float:
    """ln Gamma(1 + e) for |e| <= 0.5, accurate relative to the result."""
    acc = 0.0
    for c in reversed(_LGAMMA1P_COEFFS):
        acc = acc * e + c
    return e * (-_EULER_GAMMA + e * acc)


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0:
        raise SpecialFunctionDomainError(f"ln_gamma requires x > 0, got {x}")
    # near the roots at 1 and 2 math.lgamma is only accurate in absolute terms
    if 0.5 <= x <= 1.5:
        return _lgamma1p(x - 1.0)
    if 1.5 < x <= 2.5:
        e = x - 2.0
        return math.log1p(e) + _lgamma1p(e)
    return math.lgamma(x)


def _lower_gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    n = 0
    while n < 100_000:
        n += 1
        term *= x / (a + n)
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - ln_gamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    # modified Lentz
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 100_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - ln_gamma(a)) * h


def reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma ``P(a, x) = gamma(a, x) / Gamma(a)``."""
    if not a > 0:
        raise SpecialFunctionDomainError(f"reg_lower_gamma requires a > 0, got {a}")
    if not x >= 0:
        raise SpecialFunctionDomainError(f"reg_lower_gamma requires x >= 0, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _lower_gamma_series(a, x))
    return max(0.0, 1.0 - _upper_gamma_cf(a, x))


def chi2_sf(t: float, df: int) -> float:
    """Survival function of the chi-squared distribution with ``df`` degrees of freedom."""
    if df < 1 or int(df) != df:
        raise SpecialFunctionDomainError(f"df must be a positive integer, got {df}")
    if not t >= 0:
        raise SpecialFunctionDomainError(f"chi2_sf requires t >= 0, got {t}")
    return 1.0 - reg_lower_gamma(df / 2.0, t / 2.0)


# ---------------------------------------------------------------------------
# Modified Bessel function of the first kind
# ---------------------------------------------------------------------------

def _debye_polynomials(count: int) -> list[list[float]]:
    """Coefficients (ascending powers of p) of the Debye polynomials U_0..U_{count-1}."""
    polys = [[Fraction(1)]]
    for _ in range(count - 1):
        u = polys[-1]
        deg = len(u) - 1
        # 1/2 p^2 (1 - p^2) U'(p)
        du = [Fraction(i) * u[i] for i in range(1, deg + 1)]  # coefficient of p^{i-1}
        nxt = [Fraction(0)] * (deg + 4)
        for j, c in enumerate(du):
            nxt[j + 2] += c / 2
            nxt[j + 4] -= c / 2
        # 1/8 int_0^p (1 - 5 t^2) U(t) dt
        for i, c in enumerate(u):
            nxt[i + 1] += c / (8 * (i + 1))
            nxt[i + 3] -= 5 * c / (8 * (i + 3))
        while len(nxt) > 1 and nxt[-1] == 0:
            nxt.pop()
        polys.append(nxt)
    return [[float(c) for c in poly] for poly in polys]


_DEBYE_U = _debye_polynomials(DEBYE_TERMS)


def _horner(coeffs: list[float], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _bessel_i_series_log(nu: float, x: float) -> float:
    half = 0.5 * x
    y = half * half
    lead = nu * math.log(half) - ln_gamma(nu + 1.0)
    term = 1.0
    total = 1.0
    offset = 0.0
    k = 0
    while k < _MAX_SERIES_TERMS:
        term *= y / ((k + 1) * (k + nu + 1))
        k += 1
        total += term
        if total > 1e250:
            offset += math.log(total)
            term /= total
            total = 1.0
        if term < total * _EPS and k > half:
            break
    return lead + offset + math.log(total)


def _bessel_i_hankel_log(nu: float, x: float) -> float | None:
    mu = 4.0 * nu * nu
    term = 1.0
    total = 1.0
    prev = math.inf
    for k in range(1, 400):
        term *= -(mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        if k > nu + 1 and abs(term) > prev:
            return None
        total += term
        prev = abs(term)
        if abs(term) < 1e-17 * abs(total):
            return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)
    return None


def _bessel_i_debye_log(nu: float, x: float) -> float:
    z = x / nu
    root = math.sqrt(1.0 + z * z)
    p = 1.0 / root
    # nu * eta, with eta = sqrt(1+z^2) + ln(z / (1 + sqrt(1+z^2)))
    nu_eta = math.hypot(nu, x) + nu * math.log(z / (1.0 + root))
    total = 0.0
    scale = 1.0
    for poly in _DEBYE_U:
        total += _horner(poly, p) * scale
        scale /= nu
    return nu_eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(root) + math.log(total)


def log_bessel_i(q: float, x: float) -> LogValue:
    """``ln I_q(x)`` for ``q > -1`` and ``x >= 0``."""
    if not q > -1:
        raise SpecialFunctionDomainError(f"log_bessel_i requires q > -1, got {q}")
    if not x >= 0:
        raise SpecialFunctionDomainError(f"log_bessel_i requires x >= 0, got {x}")
    if x == 0:
        if q == 0:
            return LogValue(0.0)
        if q > 0:
            return LogValue.zero()
        return LogValue(math.inf)
    nu = abs(q)
    if x > BESSEL_SERIES_LIMIT + nu:
        # For -1 < q < 0, I_q - I_|q| = (2/pi) sin(pi |q|) K_|q|(x) is e^{-2x}
        # relative to I_|q|, far below double precision past the series limit.
        if nu * nu / (2.0 * x) <= HANKEL_NU2_OVER_2X:
            val = _bessel_i_hankel_log(nu, x)
            if val is not None:
                return LogValue(val)
        if nu >= 8.0:
            return LogValue(_bessel_i_debye_log(nu, x))
    return LogValue(_bessel_i_series_log(q, x))


# ---------------------------------------------------------------------------
# Kummer confluent hypergeometric function 1F1(a; b; x)
# ---------------------------------------------------------------------------

def _kummer_series_log(a: float, b: float, x: float) -> float:
    """Positive-term power series, valid for a, b > 0 and x >= 0."""
    term = 1.0
    total = 1.0
    offset = 0.0
    n = 0
    while n < _MAX_SERIES_TERMS:
        term *= (a + n) / (b + n) * x / (n + 1)
        n += 1
        total += term
        if total > 1e250:
            offset += math.log(total)
            term /= total
            total = 1.0
        if term < total * _EPS and n > x:
            break
    return offset + math.log(total)


def _asymptotic_sum(p: float, r: float, w: float) -> float | None:
    """sum_k (p)_k (r)_k / k! * w^k, or None unless the terms shrink monotonically
    all the way down to double precision (the argument is then in the
    asymptotic regime and no cancellation occurs).
    """
    term = 1.0
    total = 1.0
    for k in range(200):
        nxt = term * (p + k) * (r + k) / (k + 1) * w
        if nxt == 0.0:
            return total
        if abs(nxt) >= abs(term):
            return None
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            return total
    return None


def log_kummer_1f1(a: float, b: float, x: float) -> LogValue:
    """``ln 1F1(a; b; x)`` for ``b > a > 0`` and real ``x``.

    The value is positive on this domain. For ``x >= 0`` the defining series
    has positive terms; for ``x < 0`` the Kummer transformation
    ``1F1(a;b;x) = e^x 1F1(b-a;b;-x)`` maps back to a positive series.  Large
    ``|x|`` switches to the leading asymptotic branch.
    """
    if not (b > a > 0):
        raise SpecialFunctionDomainError(f"log_kummer_1f1 requires b > a > 0, got a={a}, b={b}")
    if math.isnan(x):
        raise SpecialFunctionDomainError("log_kummer_1f1 got NaN argument")
    if x == 0:
        return LogValue(0.0)
    ax = abs(x)
    if ax >= KUMMER_ASYMPTOTIC_MIN_X:
        lg_a, lg_b, lg_ba = ln_gamma(a), ln_gamma(b), ln_gamma(b - a)
        if x > 0:
            # Gamma(b)/Gamma(a) e^x x^{a-b} sum (b-a)_k (1-a)_k / k! x^{-k};
            # the dropped branch is smaller by Gamma(a)/Gamma(b-a) e^{-x} x^{b-2a}.
            dropped = lg_a - lg_ba - x + (b - 2 * a) * math.log(x)
            s = _asymptotic_sum(b - a, 1.0 - a, 1.0 / x) if dropped < -40 else None
            if s is not None and s > 0:
                return LogValue(lg_b - lg_a + x + (a - b) * math.log(x) + math.log(s))
        else:
            # Gamma(b)/Gamma(b-a) |x|^{-a} sum (a)_k (a-b+1)_k / k! |x|^{-k};
            # the dropped branch is smaller by Gamma(b-a)/Gamma(a) e^{-|x|} |x|^{2a-b}.
            dropped = lg_ba - lg_a - ax + (2 * a - b) * math.log(ax)
            s = _asymptotic_sum(a, a - b + 1.0, 1.0 / ax) if dropped < -40 else None
            if s is not None and s > 0:
                return LogValue(lg_b - lg_ba - a * math.log(ax) + math.log(s))
    if x > 0:
        return LogValue(_kummer_series_log(a, b, x))
    return LogValue(x + _kummer_series_log(b - a, b, ax))
