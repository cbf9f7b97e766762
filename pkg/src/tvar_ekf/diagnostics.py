"""Model-free reference statistics for return series.

Sample autocorrelations use the full-sample variance as denominator, which
keeps every estimate inside ``[-1, 1]``. Undefined quantities (zero variance)
are reported as NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from sys import float_info

import numpy as np

from .errors import DomainError
from .ingest import as_values

_EPS = 1e-16
_TINY = float_info.min / float_info.epsilon


@dataclass(frozen=True)
class SummaryStats:
    n_obs: int
    mean: float
    median: float
    std_dev: float
    skewness: float
    excess_kurtosis: float


@dataclass(frozen=True)
class RollingResult:
    """Moving-window lag autocorrelation path.

    ``indices[i]`` is the zero-based position of the last observation of the
    ``i``-th window, so the first entry is ``window - 1``.
    """

    indices: np.ndarray
    rho_path: np.ndarray
    confidence_bound: float
    pvalue_path: np.ndarray
    window: int
    lag: int
    alpha: float

    def __len__(self) -> int:
        return self.rho_path.size


def summary_stats(returns) -> SummaryStats:
    y = as_values(returns)
    n = y.size
    if n < 2:
        raise DomainError("summary statistics need at least two observations")
    mean = float(np.mean(y))
    d = y - mean
    m2 = float(np.mean(d**2))
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    std = float(np.sqrt(np.sum(d**2) / (n - 1)))
    if m2 > 0.0:
        skew = m3 / m2**1.5
        kurt = m4 / m2**2 - 3.0
    else:
        skew = kurt = float("nan")
    return SummaryStats(n, mean, float(np.median(y)), std, skew, kurt)


def sample_autocorrelation(returns, lag: int) -> float:
    y = as_values(returns)
    n = y.size
    if not 0 <= lag < n:
        raise DomainError(f"lag must satisfy 0 <= lag < {n}, got {lag}")
    d = y - np.mean(y)
    denom = float(np.dot(d, d))
    if denom == 0.0:
        return float("nan")
    if lag == 0:
        return 1.0
    return float(np.dot(d[lag:], d[:-lag])) / denom


def ljung_box_from_acf(acf, n_obs: int) -> tuple[float, float]:
    """Q statistic and p-value from autocorrelations at lags ``1..len(acf)``."""
    rho = np.asarray(acf, dtype=float).ravel()
    lags = np.arange(1, rho.size + 1)
    if rho.size < 1 or rho.size >= n_obs:
        raise DomainError(f"need 1 <= max_lag < n_obs, got {rho.size} lags for n={n_obs}")
    if not np.all(np.isfinite(rho)):
        return float("nan"), float("nan")
    q = n_obs * (n_obs + 2.0) * float(np.sum(rho**2 / (n_obs - lags)))
    return q, chi2_sf(q, rho.size)


def ljung_box(returns, max_lag: int) -> tuple[float, float]:
    y = as_values(returns)
    if not 1 <= max_lag < y.size:
        raise DomainError(f"need 1 <= max_lag < {y.size}, got {max_lag}")
    acf = [sample_autocorrelation(y, l) for l in range(1, max_lag + 1)]
    return ljung_box_from_acf(acf, y.size)


def normal_bound(window: int, alpha: float) -> float:
    """Two-sided large-sample bound ``z_{1-alpha/2} / sqrt(window)``."""
    return NormalDist().inv_cdf(1.0 - alpha / 2.0) / math.sqrt(window)


def rolling_autocorrelation(returns, w: int = 80, lag: int = 1, alpha: float = 0.01) -> RollingResult:
    y = as_values(returns)
    n = y.size
    if not (0 < lag < w <= n):
        raise DomainError(f"need 0 < lag < window <= N, got lag={lag}, window={w}, N={n}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    count = n - w + 1
    rho = np.empty(count)
    pval = np.empty(count)
    for i in range(count):
        window = y[i : i + w]
        rho[i] = sample_autocorrelation(window, lag)
        acf = [rho[i] if l == lag else sample_autocorrelation(window, l) for l in range(1, lag + 1)]
        pval[i] = ljung_box_from_acf(acf, w)[1]
    return RollingResult(
        indices=np.arange(w - 1, n),
        rho_path=rho,
        confidence_bound=normal_bound(w, alpha),
        pvalue_path=pval,
        window=w,
        lag=lag,
        alpha=alpha,
    )


def _lower_gamma_series(a: float, x: float) -> float:
    # regularized lower incomplete gamma P(a, x), valid for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _upper_gamma_cf(a: float, x: float) -> float:
    # regularized upper incomplete gamma Q(a, x) by modified Lentz, valid for x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
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


def chi2_sf(x: float, dof: float) -> float:
    """Chi-squared survival function ``Q(dof/2, x/2)``."""
    if x < 0.0 or math.isnan(x):
        raise DomainError(f"chi-squared argument must be >= 0, got {x}")
    if dof <= 0:
        raise DomainError(f"degrees of freedom must be positive, got {dof}")
    if math.isinf(x):
        return 0.0
    a, t = 0.5 * dof, 0.5 * x
    if t == 0.0:
        return 1.0
    if t < a + 1.0:
        return 1.0 - _lower_gamma_series(a, t)
    return _upper_gamma_cf(a, t)
