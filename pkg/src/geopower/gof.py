"""Goodness-of-fit statistics and chi-square distribution functions."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch, NonPositiveFitted

_EPS = 1e-16
_TINY = 1e-300
_POISSON_TAIL = 1e-12


@dataclass(frozen=True)
class GofReport:
    x2: float
    g2: float
    df: int
    phi: float
    w: float
    p_value: float
    n: float

    def as_dict(self) -> dict:
        return asdict(self)


def _pair(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise DimensionMismatch("observed and fitted vectors differ in shape")
    if np.any(~(yhat > 0)):
        raise NonPositiveFitted("fitted values must be strictly positive")
    return y, yhat


def pearson_x2(y, yhat):
    """Pearson statistic ``sum (y - yhat)^2 / yhat`` (row-wise for 2-d input)."""
    y, yhat = _pair(y, yhat)
    return np.sum((y - yhat) ** 2 / yhat, axis=-1)


def deviance_g2(y, yhat):
    """``2 sum [y log(y/yhat) - (y - yhat)]`` with ``0 log 0 = 0``."""
    y, yhat = _pair(y, yhat)
    with np.errstate(divide="ignore", invalid="ignore"):
        ylog = np.where(y > 0, y * np.log(y / yhat), 0.0)
    return 2.0 * np.sum(ylog - (y - yhat), axis=-1)


def noncentrality(x2: float, n: float) -> float:
    """Noncentrality ``phi = X^2 / N``; the effect size is ``sqrt(phi)``."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if x2 < 0:
        raise ValueError("X^2 must be non-negative")
    return x2 / n


def effect_size(x2: float, n: float) -> float:
    return math.sqrt(noncentrality(x2, n))


def gof_report(y, yhat, df: int) -> GofReport:
    x2 = float(pearson_x2(y, yhat))
    n = float(np.sum(y))
    phi = noncentrality(x2, n)
    return GofReport(x2=x2, g2=float(deviance_g2(y, yhat)), df=int(df), phi=phi,
                     w=math.sqrt(phi), p_value=central_chi2_sf(x2, df), n=n)


# regularized incomplete gamma -------------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    """Lower regularized P(a, x) by its power series (good for x < a + 1)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(100000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    """Upper regularized Q(a, x) by modified Lentz continued fraction (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 100000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma(a: float, x: float) -> tuple[float, float]:
    """``(P(a, x), Q(a, x))`` each computed where it is accurate."""
    if x <= 0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    if x < a + 1.0:
        p = _gamma_series(a, x)
        return p, 1.0 - p
    q = _gamma_cont_frac(a, x)
    return 1.0 - q, q


def central_chi2_cdf(x: float, k: float) -> float:
    if k <= 0:
        raise ValueError("degrees of freedom must be positive")
    return regularized_gamma(k / 2.0, x / 2.0)[0]


def central_chi2_sf(x: float, k: float) -> float:
    if k <= 0:
        raise ValueError("degrees of freedom must be positive")
    return regularized_gamma(k / 2.0, x / 2.0)[1]


def _chi2_logpdf(x: float, k: float) -> float:
    h = k / 2.0
    return (h - 1.0) * math.log(x) - x / 2.0 - h * math.log(2.0) - math.lgamma(h)


def central_chi2_quantile(p: float, k: float) -> float:
    """Inverse of the central chi-square CDF.

    Newton steps from a Wilson-Hilferty start, kept inside a shrinking
    bisection bracket.  Upper-tail probabilities are matched through the
    survival function to keep precision for p near 1.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if k <= 0:
        raise ValueError("degrees of freedom must be positive")
    upper = p > 0.5

    def resid(x):
        return (q_target - central_chi2_sf(x, k)) if upper else (central_chi2_cdf(x, k) - p)

    q_target = 1.0 - p
    # Wilson-Hilferty start
    z = _norm_ppf(p)
    c = 2.0 / (9.0 * k)
    x = max(k * (1.0 - c + z * math.sqrt(c)) ** 3, 1e-8)
    lo, hi = 0.0, max(2.0 * x, 1.0)
    while resid(hi) < 0:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        r = resid(x)
        if r == 0:
            return x
        if r < 0:
            lo = max(lo, x)
        else:
            hi = min(hi, x)
        step = r / math.exp(_chi2_logpdf(x, k)) if x > 0 else 0.0
        x_new = x - step
        if not (lo < x_new < hi) or not math.isfinite(x_new):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * max(1.0, x):
            return x_new
        x = x_new
    return x


def _norm_ppf(p: float) -> float:
    """Standard normal quantile (Acklam's rational approximation, ~1e-9)."""
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
         3.754408661907416e+00)
    if p < 0.02425:
        t = math.sqrt(-2 * math.log(p))
        return (((((c[0] * t + c[1]) * t + c[2]) * t + c[3]) * t + c[4]) * t + c[5]) / \
            ((((d[0] * t + d[1]) * t + d[2]) * t + d[3]) * t + 1)
    if p > 1 - 0.02425:
        return -_norm_ppf(1 - p)
    t = p - 0.5
    r = t * t
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * t / \
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)


def _poisson_logpmf(m: int, mu: float) -> float:
    if mu == 0:
        return 0.0 if m == 0 else -math.inf
    return -mu + m * math.log(mu) - math.lgamma(m + 1)


def noncentral_chi2_cdf(x: float, k: float, lam: float) -> float:
    """Noncentral chi-square CDF as a Poisson(lam/2) mixture of central CDFs.

    Terms are summed outward from the Poisson mode until the Poisson mass not
    yet included falls below 1e-12.
    """
    if lam < 0:
        raise ValueError("noncentrality must be non-negative")
    if x <= 0:
        return 0.0
    if lam == 0:
        return central_chi2_cdf(x, k)
    mu = lam / 2.0
    mode = int(math.floor(mu))
    total = 0.0
    mass = 0.0
    m = mode
    while m >= 0:
        w = math.exp(_poisson_logpmf(m, mu))
        total += w * central_chi2_cdf(x, k + 2 * m)
        mass += w
        if w < _POISSON_TAIL * 1e-4 and m < mode:
            break
        m -= 1
    m = mode + 1
    while 1.0 - mass >= _POISSON_TAIL:
        w = math.exp(_poisson_logpmf(m, mu))
        total += w * central_chi2_cdf(x, k + 2 * m)
        mass += w
        m += 1
        if w == 0.0 and m > mu + 50 * math.sqrt(mu + 1):
            break
    return min(max(total, 0.0), 1.0)


def classical_power(lam: float, k: float, alpha: float) -> float:
    """Power of the level-alpha chi-square test against noncentrality ``lam``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    crit = central_chi2_quantile(1.0 - alpha, k)
    if lam == 0:
        return central_chi2_sf(crit, k)
    return 1.0 - noncentral_chi2_cdf(crit, k, lam)


def odds_ratio_2x2(table) -> float:
    """Cross-product ratio ``t00 t11 / (t01 t10)`` for cells in row-major order."""
    t = np.asarray(table, dtype=float).ravel()
    if t.shape != (4,):
        raise DimensionMismatch("a 2x2 table has four cells")
    return float(t[0] * t[3] / (t[1] * t[2]))
