"""Maximum-likelihood calibration of the efficiency models.

The likelihood is the prediction-error decomposition produced by the filter,
without the ``2 pi`` constant. Optimisation uses a bounded Nelder-Mead search
restarted once from its best point; fixed parameters are expressed by equal
lower and upper bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .diagnostics import chi2_sf
from .errors import DomainError, NonstationarityError, NumericalDivergenceError, ParameterDomainError
from .ingest import as_values
from .models import (
    DEFAULT_OBS_NOISE,
    PARAMS_BY_KIND,
    ModelKind,
    build_model,
    initial_conditions,
)
from .statespace import FilterRun, run_filter

DIVERGENCE_LOGLIK = -1e300
PARAM_TOL = 1e-6
LOGLIK_TOL = 1e-9

DEFAULT_BOUNDS = {
    ModelKind.TVAR1: ([0.0, 1e-8, -1.0], [1.0, 1.0, 1.0]),
    ModelKind.TVAR1_TREND: ([0.0, 1e-8, -1.0, -0.1], [1.0, 1.0, 1.0, 0.1]),
    ModelKind.TVAR1_GARCH: ([-1.0, 1e-8, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0, 1.0]),
}
DEFAULT_THETA0 = {
    ModelKind.TVAR1: [0.01, 0.1, 0.0],
    ModelKind.TVAR1_TREND: [0.01, 0.1, 0.0, 0.0],
    ModelKind.TVAR1_GARCH: [0.0, 0.0003, 0.1, 0.8, 0.01],
}
FILTER_METHODS = ("ekf", "kf")


@dataclass(frozen=True)
class ParameterSpec:
    """What to estimate: model family, parameter box and starting point.

    ``method`` selects the nonlinear EKF (``"ekf"``) or the linear
    regression-form Kalman filter (``"kf"``) as the likelihood engine.
    """

    model_kind: ModelKind
    names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    initial_theta: np.ndarray
    obs_noise: float = DEFAULT_OBS_NOISE
    method: str = "ekf"

    def __post_init__(self):
        kind = ModelKind.parse(self.model_kind)
        object.__setattr__(self, "model_kind", kind)
        for attr in ("lower", "upper", "initial_theta"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float).ravel())
        k = len(self.names)
        if tuple(self.names) != PARAMS_BY_KIND[kind].names():
            raise ParameterDomainError(f"{kind.value} parameters are {PARAMS_BY_KIND[kind].names()}")
        if not (self.lower.size == self.upper.size == self.initial_theta.size == k):
            raise ParameterDomainError("bounds and initial theta must match the parameter names")
        if np.any(self.lower > self.initial_theta) or np.any(self.initial_theta > self.upper):
            raise ParameterDomainError("initial theta must lie within [lower, upper]")
        if self.method not in FILTER_METHODS:
            raise ParameterDomainError(f"method must be one of {FILTER_METHODS}, got {self.method!r}")
        if not self.obs_noise > 0.0:
            raise ParameterDomainError("obs_noise must be positive")

    @classmethod
    def default(cls, kind, theta0=None, obs_noise: float = DEFAULT_OBS_NOISE, method: str = "ekf",
                fixed: dict[str, float] | None = None) -> "ParameterSpec":
        """Default box for ``kind``; ``fixed`` pins named parameters to a value."""
        kind = ModelKind.parse(kind)
        names = PARAMS_BY_KIND[kind].names()
        lower, upper = (np.array(b, dtype=float) for b in DEFAULT_BOUNDS[kind])
        theta = np.array(DEFAULT_THETA0[kind] if theta0 is None else theta0, dtype=float)
        for name, value in (fixed or {}).items():
            i = names.index(name)
            lower[i] = upper[i] = theta[i] = value
        return cls(kind, names, lower, upper, theta, obs_noise, method)

    @property
    def free(self) -> np.ndarray:
        return self.lower < self.upper

    @property
    def n_free(self) -> int:
        return int(np.sum(self.free))


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    stderr: np.ndarray
    max_loglik: float
    aic: float
    n_obs: int
    converged: bool
    iterations: int
    names: tuple[str, ...] = ()
    model_kind: ModelKind = ModelKind.TVAR1
    n_params: int = 0
    message: str = ""

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.theta_hat)))


@dataclass(frozen=True)
class _KernelOutput:
    loglik: float
    failed_at: int
    beta: np.ndarray
    innovations: np.ndarray
    innovation_vars: np.ndarray


def _check_theta(spec: ParameterSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != len(spec.names):
        raise ParameterDomainError(f"theta must have {len(spec.names)} entries, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        raise ParameterDomainError("theta must be finite")
    if np.any(theta < spec.lower) or np.any(theta > spec.upper):
        raise ParameterDomainError(f"theta {theta.tolist()} lies outside its bounds")
    return theta


def _run_kernel(spec: ParameterSpec, params, y: np.ndarray) -> _KernelOutput:
    n = y.size
    beta = np.full(n, np.nan)
    e = np.full(max(n - 1, 0), np.nan)
    re = np.full(max(n - 1, 0), np.nan)
    kind = spec.model_kind
    if spec.method == "ekf":
        if kind is ModelKind.TVAR1_GARCH:
            ll, failed = _kernels.ekf_tvar1_garch(
                y, params.beta1_0, 1.0, params.omega, params.b1, params.unconditional_variance,
                params.sigma_w2, spec.obs_noise, beta, e, re,
            )
        else:
            mu = params.mu_beta1 if kind is ModelKind.TVAR1_TREND else 0.0
            ll, failed = _kernels.ekf_tvar1(
                y, params.beta1_0, 1.0, params.sigma_w2, params.sigma_eps2, mu, spec.obs_noise, beta, e, re,
            )
    else:
        if kind is ModelKind.TVAR1_GARCH:
            ll, failed = _kernels.kf_regression(
                y, params.beta1_0, 1.0, params.sigma_w2, 0.0, True, 0.0,
                params.omega, params.a1, params.b1, beta, e, re,
            )
        else:
            mu = params.mu_beta1 if kind is ModelKind.TVAR1_TREND else 0.0
            ll, failed = _kernels.kf_regression(
                y, params.beta1_0, 1.0, params.sigma_w2, mu, False, params.sigma_eps2,
                1.0, 0.0, 0.0, beta, e, re,
            )
    return _KernelOutput(float(ll), int(failed), beta, e, re)


def log_likelihood(spec: ParameterSpec, theta, returns) -> float:
    """Filter log-likelihood at ``theta``; :data:`DIVERGENCE_LOGLIK` on failure.

    Out-of-box ``theta`` raises :class:`ParameterDomainError`. A GARCH point
    with ``a1 + b1 >= 1`` and any filter divergence return the sentinel.
    """
    theta = _check_theta(spec, theta)
    y = as_values(returns)
    if y.size == 0:
        raise DomainError("returns must be nonempty")
    try:
        params = PARAMS_BY_KIND[spec.model_kind].from_vector(theta)
    except NonstationarityError:
        return DIVERGENCE_LOGLIK
    out = _run_kernel(spec, params, np.ascontiguousarray(y))
    if out.failed_at >= 0 or not math.isfinite(out.loglik):
        return DIVERGENCE_LOGLIK
    return out.loglik


def filter_at(spec: ParameterSpec, theta, returns) -> tuple[FilterRun, np.ndarray]:
    """Run the generic EKF at ``theta`` and return the run and the coefficient path.

    The path has one entry per return: the initial coefficient followed by the
    filtered coefficient after each subsequent return.
    """
    theta = _check_theta(spec, theta)
    y = as_values(returns)
    params = PARAMS_BY_KIND[spec.model_kind].from_vector(theta)
    model = build_model(spec.model_kind, params, spec.obs_noise)
    init = initial_conditions(spec.model_kind, params, float(y[0]))
    run = run_filter(model, y[1:], init)
    beta = np.concatenate([[init.mean[0]], run.filtered_means[:, 0]])
    return run, beta


def beta_path(spec: ParameterSpec, theta, returns) -> np.ndarray:
    """Filtered coefficient path at ``theta`` using ``spec.method``.

    Raises :class:`~tvar_ekf.errors.NumericalDivergenceError` on divergence.
    """
    theta = _check_theta(spec, theta)
    params = PARAMS_BY_KIND[spec.model_kind].from_vector(theta)
    out = _run_kernel(spec, params, np.ascontiguousarray(as_values(returns)))
    if out.failed_at >= 0:
        raise NumericalDivergenceError("filter diverged", step=out.failed_at)
    return out.beta


def aic(max_loglik: float, k: int) -> float:
    if k < 0:
        raise DomainError("parameter count must be >= 0")
    return 2.0 * k - 2.0 * max_loglik


def lr_test(loglik_restricted: float, loglik_full: float, dof: int) -> tuple[float, float]:
    """Likelihood-ratio statistic (clamped at zero) and its chi-squared p-value."""
    if dof < 1:
        raise DomainError("LR test needs dof >= 1")
    stat = max(0.0, 2.0 * (loglik_full - loglik_restricted))
    return stat, chi2_sf(stat, dof)


def reconstruction_error(beta_path, rho_path, window: int) -> float:
    """Sup-norm distance between the coefficient path and the rolling proxy.

    ``beta_path[i]`` belongs to observation ``i``; ``rho_path[j]`` to the
    window ending at observation ``window - 1 + j``. NaN proxy points are
    skipped.
    """
    beta = np.asarray(beta_path, dtype=float).ravel()
    rho = np.asarray(rho_path, dtype=float).ravel()
    if window < 1:
        raise DomainError("window must be positive")
    aligned = beta[window - 1 :]
    m = min(aligned.size, rho.size)
    diff = np.abs(rho[:m] - aligned[:m])
    diff = diff[np.isfinite(diff)]
    if diff.size == 0:
        raise DomainError("coefficient and proxy paths do not overlap")
    return float(diff.max())


def _hessian(objective: Callable[[np.ndarray], float], theta: np.ndarray, idx: Sequence[int],
             h: np.ndarray) -> np.ndarray:
    f0 = objective(theta)
    k = len(idx)
    H = np.zeros((k, k))

    def at(steps):
        t = theta.copy()
        for i, s in steps:
            t[i] += s
        return objective(t)

    for a, i in enumerate(idx):
        H[a, a] = (at([(i, h[i])]) - 2.0 * f0 + at([(i, -h[i])])) / h[i] ** 2
        for b in range(a):
            j = idx[b]
            H[a, b] = H[b, a] = (
                at([(i, h[i]), (j, h[j])]) - at([(i, h[i]), (j, -h[j])])
                - at([(i, -h[i]), (j, h[j])]) + at([(i, -h[i]), (j, -h[j])])
            ) / (4.0 * h[i] * h[j])
    return H


def standard_errors(objective: Callable[[np.ndarray], float], theta_hat, lower=None, upper=None,
                    free=None) -> np.ndarray:
    """Square roots of the inverse-Hessian diagonal of ``objective`` (a negative log-likelihood).

    Central differences use ``h_i = 1e-4 * max(|theta_i|, 1)``. Entries whose
    stencil leaves ``[lower, upper]``, whose objective evaluations fail, or
    whose curvature is not positive are returned as NaN.
    """
    theta = np.asarray(theta_hat, dtype=float).ravel()
    k = theta.size
    h = 1e-4 * np.maximum(np.abs(theta), 1.0)
    lower = np.full(k, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(k, np.inf) if upper is None else np.asarray(upper, dtype=float)
    use = np.ones(k, dtype=bool) if free is None else np.asarray(free, dtype=bool).copy()
    use &= (theta - h >= lower) & (theta + h <= upper)

    def safe(t):
        try:
            v = float(objective(t))
        except ParameterDomainError:
            return math.inf
        return v if abs(v) < 1e299 else math.inf

    out = np.full(k, np.nan)
    idx = [int(i) for i in np.flatnonzero(use)]
    if not idx:
        return out
    H = _hessian(safe, theta, idx, h)
    bad_rows = ~np.all(np.isfinite(H), axis=1)
    keep = [a for a in range(len(idx)) if not bad_rows[a]]
    while keep:
        sub = H[np.ix_(keep, keep)]
        try:
            L = np.linalg.cholesky(sub)
        except np.linalg.LinAlgError:
            # drop the parameter dominating the least-curved direction and retry
            _, vecs = np.linalg.eigh(sub)
            keep.pop(int(np.argmax(np.abs(vecs[:, 0]))))
            continue
        inv = np.linalg.inv(L)
        cov_diag = np.sum(inv**2, axis=0)
        for a, v in zip(keep, cov_diag):
            out[idx[a]] = math.sqrt(v)
        break
    return out


def fit_mle(spec: ParameterSpec, returns, max_iter: int = 5000) -> FitResult:
    """Maximise the filter likelihood over the parameter box of ``spec``."""
    y = np.ascontiguousarray(as_values(returns))
    if y.size < 2:
        raise DomainError("fitting needs at least two returns")
    free = spec.free
    base = spec.initial_theta.copy()

    def full(z):
        t = base.copy()
        t[free] = np.clip(z, spec.lower[free], spec.upper[free])
        return t

    def neg(z):
        return -log_likelihood(spec, full(z), y)

    iterations = 0
    success = True
    message = "no free parameters"
    z = base[free]
    if z.size:
        bounds = list(zip(spec.lower[free], spec.upper[free]))
        options = {"xatol": PARAM_TOL, "fatol": LOGLIK_TOL, "maxiter": max_iter, "maxfev": 4 * max_iter}
        best = None
        for _ in range(2):
            res = minimize(neg, z, method="Nelder-Mead", bounds=bounds, options=options)
            iterations += int(res.nit)
            if best is None or res.fun <= best.fun:
                best = res
            z = best.x
        success = bool(res.success)
        message = str(res.message)
        z = best.x

    theta_hat = full(z)
    max_ll = log_likelihood(spec, theta_hat, y)
    converged = success and max_ll > DIVERGENCE_LOGLIK
    stderr = standard_errors(
        lambda t: -log_likelihood(spec, t, y), theta_hat, spec.lower, spec.upper, free
    )
    k = spec.n_free
    return FitResult(
        theta_hat=theta_hat,
        stderr=stderr,
        max_loglik=max_ll,
        aic=aic(max_ll, k),
        n_obs=int(y.size),
        converged=converged,
        iterations=iterations,
        names=spec.names,
        model_kind=spec.model_kind,
        n_params=k,
        message=message,
    )
