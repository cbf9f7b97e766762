"""State-space builders for time-varying AR(1) efficiency models.

Three nonlinear models track the AR(1) coefficient ``beta1(t)`` of a return
series ``y(t)``:

* ``tvar1``: random-walk coefficient, constant return variance;
* ``tvar1_trend``: random walk with a constant drift ``mu_beta1``;
* ``tvar1_garch``: random-walk coefficient with GARCH(1,1) return variance.

A linear companion-form AR(n) model with constant coefficients is also
provided. All models observe the return component almost exactly, with a
small measurement noise ``obs_noise``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields
from enum import Enum

import numpy as np

from .errors import NegativeVarianceWarning, NonstationarityError, ParameterDomainError
from .statespace import ModelDefinition, StateEstimate

DEFAULT_OBS_NOISE = 1e-6
VARIANCE_FLOOR = 1e-12
BETA_UPPER = 1.0
BETA_LOWER = -1.0


class ModelKind(str, Enum):
    TVAR1 = "tvar1"
    TVAR1_TREND = "tvar1_trend"
    TVAR1_GARCH = "tvar1_garch"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).replace("-", "_").lower())
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown model kind {value!r}; expected one of {choices}") from None


class _ParamsMixin:
    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_vector(cls, theta):
        values = [float(v) for v in np.asarray(theta, dtype=float).ravel()]
        if len(values) != len(cls.names()):
            raise ParameterDomainError(
                f"{cls.__name__} takes {len(cls.names())} values, got {len(values)}"
            )
        return cls(*values)

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.names()], dtype=float)


def _check_finite(params) -> None:
    for name in params.names():
        if not math.isfinite(getattr(params, name)):
            raise ParameterDomainError(f"{name} must be finite")


def _check_tvar1(sigma_w2: float, sigma_eps2: float, beta1_0: float) -> None:
    if sigma_w2 < 0.0:
        raise ParameterDomainError(f"sigma_w2 must be >= 0, got {sigma_w2}")
    if sigma_eps2 <= 0.0:
        raise ParameterDomainError(f"sigma_eps2 must be > 0, got {sigma_eps2}")
    if abs(beta1_0) > 1.0:
        raise ParameterDomainError(f"|beta1_0| must not exceed 1, got {beta1_0}")


@dataclass(frozen=True)
class TvAr1Params(_ParamsMixin):
    sigma_w2: float
    sigma_eps2: float
    beta1_0: float

    def __post_init__(self):
        _check_finite(self)
        _check_tvar1(self.sigma_w2, self.sigma_eps2, self.beta1_0)


@dataclass(frozen=True)
class TvAr1TrendParams(_ParamsMixin):
    sigma_w2: float
    sigma_eps2: float
    beta1_0: float
    mu_beta1: float

    def __post_init__(self):
        _check_finite(self)
        _check_tvar1(self.sigma_w2, self.sigma_eps2, self.beta1_0)


@dataclass(frozen=True)
class TvAr1GarchParams(_ParamsMixin):
    beta1_0: float
    omega: float
    a1: float
    b1: float
    sigma_w2: float

    def __post_init__(self):
        _check_finite(self)
        if abs(self.beta1_0) > 1.0:
            raise ParameterDomainError(f"|beta1_0| must not exceed 1, got {self.beta1_0}")
        if self.omega <= 0.0:
            raise ParameterDomainError(f"omega must be > 0, got {self.omega}")
        if self.a1 < 0.0 or self.b1 < 0.0:
            raise ParameterDomainError("GARCH coefficients a1, b1 must be >= 0")
        if self.sigma_w2 < 0.0:
            raise ParameterDomainError(f"sigma_w2 must be >= 0, got {self.sigma_w2}")
        if self.a1 + self.b1 >= 1.0:
            raise NonstationarityError(f"a1 + b1 = {self.a1 + self.b1} is not below 1")

    @property
    def unconditional_variance(self) -> float:
        return unconditional_variance(self.omega, self.a1, self.b1)


@dataclass(frozen=True)
class CompanionArParams:
    beta: tuple[float, ...]

    def __post_init__(self):
        beta = tuple(float(b) for b in np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if len(beta) < 1:
            raise ParameterDomainError("companion AR needs at least one coefficient")
        object.__setattr__(self, "beta", beta)


PARAMS_BY_KIND = {
    ModelKind.TVAR1: TvAr1Params,
    ModelKind.TVAR1_TREND: TvAr1TrendParams,
    ModelKind.TVAR1_GARCH: TvAr1GarchParams,
}


def unconditional_variance(omega: float, a1: float, b1: float) -> float:
    """Long-run GARCH(1,1) variance ``omega / (1 - a1 - b1)``."""
    if a1 + b1 >= 1.0:
        raise NonstationarityError(f"a1 + b1 = {a1 + b1} is not below 1")
    return omega / (1.0 - a1 - b1)


def _check_obs_noise(obs_noise: float) -> None:
    if not obs_noise > 0.0:
        raise ParameterDomainError(f"obs_noise must be > 0, got {obs_noise}")


def _tvar1_with_drift(sigma_w2: float, sigma_eps2: float, mu: float, obs_noise: float, name: str):
    def drift(x, k=0):
        b = x[0] + mu
        return np.array([b, b * x[1]])

    def jac_state(x, k=0):
        return np.array([[1.0, 0.0], [x[1], x[0] + mu]])

    def jac_noise(x, k=0):
        return np.array([[1.0, 0.0], [x[1], 1.0]])

    def transition(x, u, k=0):
        b = x[0] + mu + u[0]
        return np.array([b, b * x[1] + u[1]])

    return ModelDefinition(
        state_dim=2,
        noise_dim=2,
        obs_dim=1,
        drift=drift,
        drift_jacobian_state=jac_state,
        drift_jacobian_noise=jac_noise,
        process_noise_cov=np.diag([sigma_w2, sigma_eps2]),
        obs_matrix=np.array([[0.0, 1.0]]),
        obs_noise_cov=np.array([[obs_noise]]),
        transition=transition,
        name=name,
    )


def build_tvar1(params: TvAr1Params, obs_noise: float = DEFAULT_OBS_NOISE) -> ModelDefinition:
    """Random-walk AR(1) coefficient, state ``[beta1, y]``."""
    _check_obs_noise(obs_noise)
    return _tvar1_with_drift(params.sigma_w2, params.sigma_eps2, 0.0, obs_noise, ModelKind.TVAR1.value)


def build_tvar1_trend(params: TvAr1TrendParams, obs_noise: float = DEFAULT_OBS_NOISE) -> ModelDefinition:
    """As :func:`build_tvar1` with coefficient drift ``mu_beta1`` per step."""
    _check_obs_noise(obs_noise)
    return _tvar1_with_drift(
        params.sigma_w2, params.sigma_eps2, params.mu_beta1, obs_noise, ModelKind.TVAR1_TREND.value
    )


def build_tvar1_garch(
    params: TvAr1GarchParams,
    obs_noise: float = DEFAULT_OBS_NOISE,
    expected_shock: bool = False,
) -> ModelDefinition:
    """Random-walk AR(1) coefficient with GARCH(1,1) variance, state ``[beta1, y, sigma2]``.

    The noise vector is ``(w, eps_next, eps_prev)`` with covariance
    ``diag(sigma_w2, 1, 1)``. Linearisation is at zero noise, so the ARCH term
    ``a1 * sigma2 * eps_prev**2`` drops out of the drift and of both Jacobians.
    With ``expected_shock=True`` the drift instead uses ``E[eps_prev**2] = 1``,
    i.e. the variance persistence becomes ``a1 + b1``.
    """
    _check_obs_noise(obs_noise)
    omega, a1, b1, sw2 = params.omega, params.a1, params.b1, params.sigma_w2
    persistence = a1 + b1 if expected_shock else b1

    def next_variance(x3):
        s = omega + persistence * x3
        if s < VARIANCE_FLOOR:
            warnings.warn(
                f"predicted variance {s:.3e} clamped at {VARIANCE_FLOOR:g}",
                NegativeVarianceWarning,
                stacklevel=3,
            )
            s = VARIANCE_FLOOR
        return s

    def drift(x, k=0):
        return np.array([x[0], x[0] * x[1], omega + persistence * x[2]])

    def jac_state(x, k=0):
        return np.array(
            [[1.0, 0.0, 0.0], [x[1], x[0], 0.0], [0.0, 0.0, persistence]]
        )

    def jac_noise(x, k=0):
        return np.array(
            [[1.0, 0.0, 0.0], [x[1], math.sqrt(next_variance(x[2])), 0.0], [0.0, 0.0, 0.0]]
        )

    def transition(x, u, k=0):
        w, eps_next, eps_prev = u
        s2 = omega + a1 * x[2] * eps_prev**2 + b1 * x[2]
        if expected_shock:
            s2 += a1 * x[2] * (1.0 - eps_prev**2)
        b = x[0] + w
        return np.array([b, b * x[1] + math.sqrt(max(s2, VARIANCE_FLOOR)) * eps_next, s2])

    return ModelDefinition(
        state_dim=3,
        noise_dim=3,
        obs_dim=1,
        drift=drift,
        drift_jacobian_state=jac_state,
        drift_jacobian_noise=jac_noise,
        process_noise_cov=np.diag([sw2, 1.0, 1.0]),
        obs_matrix=np.array([[0.0, 1.0, 0.0]]),
        obs_noise_cov=np.array([[obs_noise]]),
        transition=transition,
        name=ModelKind.TVAR1_GARCH.value,
    )


def companion_matrix(beta) -> np.ndarray:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    n = beta.size
    F = np.zeros((n, n))
    F[0] = beta
    F[1:, :-1] = np.eye(n - 1)
    return F


def build_companion_ar(
    params: CompanionArParams, noise_vars: tuple[float, float] = (1.0, DEFAULT_OBS_NOISE)
) -> ModelDefinition:
    """Constant-coefficient AR(n) in companion form, state ``[y_k, ..., y_{k-n+1}]``."""
    sigma_eps2, obs_noise = noise_vars
    _check_obs_noise(obs_noise)
    if sigma_eps2 < 0.0:
        raise ParameterDomainError(f"sigma_eps2 must be >= 0, got {sigma_eps2}")
    F = companion_matrix(params.beta)
    n = F.shape[0]
    G = np.zeros((n, 1))
    G[0, 0] = 1.0
    H = np.zeros((1, n))
    H[0, 0] = 1.0
    return ModelDefinition(
        state_dim=n,
        noise_dim=1,
        obs_dim=1,
        drift=lambda x, k=0: F @ x,
        drift_jacobian_state=lambda x, k=0: F.copy(),
        drift_jacobian_noise=lambda x, k=0: G.copy(),
        process_noise_cov=np.array([[sigma_eps2]]),
        obs_matrix=H,
        obs_noise_cov=np.array([[obs_noise]]),
        transition=lambda x, u, k=0: F @ x + G @ np.atleast_1d(u),
        name=f"companion_ar{n}",
    )


def build_model(kind, params, obs_noise: float = DEFAULT_OBS_NOISE) -> ModelDefinition:
    kind = ModelKind.parse(kind)
    builder = {
        ModelKind.TVAR1: build_tvar1,
        ModelKind.TVAR1_TREND: build_tvar1_trend,
        ModelKind.TVAR1_GARCH: build_tvar1_garch,
    }[kind]
    return builder(params, obs_noise)


def bounded_prior(upper: float = BETA_UPPER, lower: float = BETA_LOWER) -> tuple[float, float]:
    """Centre and variance of a coefficient known to lie in ``[lower, upper]``.

    The centre is the midpoint; the variance is the squared largest distance
    from the centre to a bound.
    """
    centre = 0.5 * (upper + lower)
    alpha = max(abs(upper - centre), abs(lower - centre))
    return centre, alpha**2


def initial_conditions(kind, params, first_return: float, free_beta0: bool = True) -> StateEstimate:
    """Filter initial state at the first return.

    With ``free_beta0`` the coefficient entry is ``params.beta1_0``; otherwise
    it comes from :func:`bounded_prior` on ``[-1, 1]``, whose variance sits on
    the coefficient's diagonal entry.
    """
    kind = ModelKind.parse(kind)
    beta0, beta_var = params.beta1_0, 1.0
    if not free_beta0:
        beta0, beta_var = bounded_prior()
    if kind is ModelKind.TVAR1_GARCH:
        mean = [beta0, first_return, params.unconditional_variance]
    else:
        mean = [beta0, first_return]
    cov = np.eye(len(mean))
    cov[0, 0] = beta_var
    return StateEstimate(np.array(mean, dtype=float), cov, 0)


def simulate(kind, params, n_obs: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(returns, betas)`` of length ``n_obs`` from one of the three models.

    ``betas[0]`` is ``params.beta1_0``; the first return is drawn from the
    (unconditional) return variance.
    """
    kind = ModelKind.parse(kind)
    if n_obs < 1:
        raise ValueError("n_obs must be positive")
    y = np.empty(n_obs)
    beta = np.empty(n_obs)
    beta[0] = params.beta1_0
    sw = math.sqrt(params.sigma_w2)
    w = rng.standard_normal(n_obs) * sw
    eps = rng.standard_normal(n_obs)

    if kind is ModelKind.TVAR1_GARCH:
        s2 = params.unconditional_variance
        y[0] = math.sqrt(s2) * eps[0]
        for k in range(n_obs - 1):
            s2 = params.omega + params.a1 * s2 * eps[k] ** 2 + params.b1 * s2
            beta[k + 1] = beta[k] + w[k + 1]
            y[k + 1] = beta[k + 1] * y[k] + math.sqrt(s2) * eps[k + 1]
        return y, beta

    mu = params.mu_beta1 if kind is ModelKind.TVAR1_TREND else 0.0
    se = math.sqrt(params.sigma_eps2)
    y[0] = se * eps[0]
    for k in range(n_obs - 1):
        beta[k + 1] = beta[k] + mu + w[k + 1]
        y[k + 1] = beta[k + 1] * y[k] + se * eps[k + 1]
    return y, beta
