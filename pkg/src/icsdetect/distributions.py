"""Normal and chi-square distribution functions and sample moments."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import InputError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def normal_cdf(z):
    """Standard normal distribution function."""
    return special.ndtr(z)


def normal_quantile(u):
    """Inverse of :func:`normal_cdf` on the open interval (0, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise InputError("normal quantile requires 0 < u < 1")
    return special.ndtri(u)


def _gamma_series(a, x):
    # Lower regularized incomplete gamma by its power series; x < a + 1.
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # Upper regularized incomplete gamma by Lentz's continued fraction; x >= a + 1.
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
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
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_p(a, x):
    """Regularized lower incomplete gamma function P(a, x)."""
    if a <= 0 or x < 0:
        raise InputError("gamma_p requires a > 0 and x >= 0")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


def gamma_q(a, x):
    """Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x)."""
    if a <= 0 or x < 0:
        raise InputError("gamma_q requires a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def _check_df(df):
    if not (df > 0 and math.isfinite(df)):
        raise InputError(f"degrees of freedom must be positive and finite, got {df}")


def chisq_cdf(x, df):
    """Chi-square distribution function with `df` degrees of freedom."""
    _check_df(df)
    if x < 0:
        raise InputError("chi-square cdf requires x >= 0")
    return gamma_p(0.5 * df, 0.5 * x)


def chisq_sf(x, df):
    """Chi-square survival function, accurate in the far upper tail."""
    _check_df(df)
    if x < 0:
        raise InputError("chi-square sf requires x >= 0")
    return gamma_q(0.5 * df, 0.5 * x)


def _chisq_logpdf(x, df):
    k = 0.5 * df
    return (k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k)


def chisq_quantile(u, df):
    """Inverse of :func:`chisq_cdf`: the `u`-quantile of chi-square(df).

    Safeguarded Newton iteration started from the Wilson-Hilferty
    approximation; bisection takes over whenever a Newton step leaves the
    current bracket.
    """
    _check_df(df)
    if not 0 < u < 1:
        raise InputError("chi-square quantile requires 0 < u < 1")
    z = float(normal_quantile(u))
    c = 2.0 / (9.0 * df)
    x = df * max(1.0 - c + z * math.sqrt(c), 1e-3) ** 3
    # work on the survival scale in the upper tail to avoid cancellation
    upper = u > 0.5
    target = 1.0 - u if upper else u
    lo, hi = 0.0, math.inf
    for _ in range(200):
        f = target - chisq_sf(x, df) if upper else chisq_cdf(x, df) - target
        if f == 0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        dens = math.exp(_chisq_logpdf(x, df)) if x > 0 else 0.0
        x_new = x - f / dens if dens > 0 else math.nan
        if not (lo < x_new < hi) or not math.isfinite(x_new):
            x_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * max(x, lo) + 1.0
        if abs(x_new - x) <= 1e-15 * max(x, 1e-300):
            x = x_new
            break
        x = x_new
    return x


@dataclass(frozen=True)
class SampleMoments:
    """Moment summary of a univariate sample (central moments use divisor n)."""

    n: int
    mean: float
    variance: float
    skewness: float
    kurtosis: float
    mean_abs_dev: float


def sample_moments(x):
    """Mean, variance, skewness sqrt(b1), kurtosis b2 and mean absolute deviation."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise InputError(f"sample moments need at least 4 observations, got {n}")
    if not np.all(np.isfinite(x)):
        raise InputError("sample has non-finite values")
    mean = x.mean()
    d = x - mean
    m2 = np.mean(d**2)
    if not m2 > 1e-300 or m2 <= (1e-13 * max(abs(mean), 1.0)) ** 2:
        raise InputError("sample has zero variance")
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    return SampleMoments(
        n=n,
        mean=float(mean),
        variance=float(m2),
        skewness=float(m3 / m2**1.5),
        kurtosis=float(m4 / m2**2),
        mean_abs_dev=float(np.mean(np.abs(d))),
    )
