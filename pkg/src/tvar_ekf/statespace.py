"""Discrete-time extended Kalman filter in covariance form.

The engine works with any :class:`ModelDefinition` whose dynamics are

    x[k+1] = f(x[k], u[k+1]),      u ~ N(0, Q)
    z[k]   = H x[k] + v[k],        v ~ N(0, R)

linearised around the current filtered mean and around zero noise. The
log-likelihood increments omit the ``-m/2 ln(2 pi)`` constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, NumericalDivergenceError

Vector = np.ndarray
Matrix = np.ndarray


@dataclass(frozen=True)
class StateEstimate:
    """Gaussian state estimate at step ``time_index``."""

    mean: Vector
    covariance: Matrix
    time_index: int = 0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ConfigurationError(
                f"covariance shape {cov.shape} does not match state of length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class ModelDefinition:
    """Nonlinear state-space model with linear measurement.

    ``drift(x, k)`` is the transition evaluated at zero noise;
    ``drift_jacobian_state`` and ``drift_jacobian_noise`` return its
    derivatives with respect to the state and the noise vector. The optional
    ``transition(x, u, k)`` evaluates the full noisy map and is used for
    simulation.
    """

    state_dim: int
    noise_dim: int
    obs_dim: int
    drift: Callable[[Vector, int], Vector]
    drift_jacobian_state: Callable[[Vector, int], Matrix]
    drift_jacobian_noise: Callable[[Vector, int], Matrix]
    process_noise_cov: Matrix
    obs_matrix: Matrix
    obs_noise_cov: Matrix
    transition: Optional[Callable[[Vector, Vector, int], Vector]] = None
    name: str = "model"

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.process_noise_cov, dtype=float))
        H = np.atleast_2d(np.asarray(self.obs_matrix, dtype=float))
        R = np.atleast_2d(np.asarray(self.obs_noise_cov, dtype=float))
        n, q, m = self.state_dim, self.noise_dim, self.obs_dim
        if Q.shape != (q, q):
            raise ConfigurationError(f"process noise covariance must be {q}x{q}, got {Q.shape}")
        if H.shape != (m, n):
            raise ConfigurationError(f"observation matrix must be {m}x{n}, got {H.shape}")
        if R.shape != (m, m):
            raise ConfigurationError(f"observation noise covariance must be {m}x{m}, got {R.shape}")
        if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.trace(Q)):
            raise ConfigurationError("process noise covariance must be symmetric PSD")
        if not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0.0:
            raise ConfigurationError("observation noise covariance must be symmetric positive definite")
        object.__setattr__(self, "process_noise_cov", Q)
        object.__setattr__(self, "obs_matrix", H)
        object.__setattr__(self, "obs_noise_cov", R)


@dataclass(frozen=True)
class Innovation:
    residual: Vector
    variance: Matrix
    loglik_increment: float


@dataclass(frozen=True)
class FilterRun:
    """Stacked per-step output of :func:`run_filter`.

    Row ``k`` of each array belongs to the ``k``-th processed observation.
    """

    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    innovations: np.ndarray
    innovation_covs: np.ndarray
    loglik_increments: np.ndarray
    total_loglik: float
    start_index: int = field(default=0)

    def __len__(self) -> int:
        return self.loglik_increments.size

    def step(self, k: int) -> tuple[StateEstimate, StateEstimate, Innovation]:
        t = self.start_index + k + 1
        return (
            StateEstimate(self.predicted_means[k], self.predicted_covs[k], t),
            StateEstimate(self.filtered_means[k], self.filtered_covs[k], t),
            Innovation(self.innovations[k], self.innovation_covs[k], float(self.loglik_increments[k])),
        )

    @property
    def steps(self) -> list[tuple[StateEstimate, StateEstimate, Innovation]]:
        return [self.step(k) for k in range(len(self))]


def _symmetrize(P: Matrix) -> Matrix:
    return 0.5 * (P + P.T)


def ekf_predict(model: ModelDefinition, filtered: StateEstimate) -> StateEstimate:
    """Time update: propagate mean through the drift, covariance through F and G."""
    n = model.state_dim
    if filtered.dim != n:
        raise ConfigurationError(f"state has length {filtered.dim}, model expects {n}")
    x, P, k = filtered.mean, filtered.covariance, filtered.time_index

    mean = np.asarray(model.drift(x, k), dtype=float)
    F = np.asarray(model.drift_jacobian_state(x, k), dtype=float)
    G = np.asarray(model.drift_jacobian_noise(x, k), dtype=float)
    if mean.shape != (n,) or F.shape != (n, n) or G.shape != (n, model.noise_dim):
        raise ConfigurationError(
            f"model returned drift {mean.shape}, F {F.shape}, G {G.shape} for state_dim {n}"
        )
    if not np.all(np.isfinite(mean)):
        raise NumericalDivergenceError("drift produced a non-finite state")

    cov = _symmetrize(F @ P @ F.T + G @ model.process_noise_cov @ G.T)
    if not np.all(np.isfinite(cov)):
        raise NumericalDivergenceError("predicted covariance is non-finite")
    return StateEstimate(mean, cov, k + 1)


def ekf_update(
    model: ModelDefinition, predicted: StateEstimate, observation
) -> tuple[StateEstimate, Innovation]:
    """Measurement update with the linear observation matrix of ``model``."""
    z = np.atleast_1d(np.asarray(observation, dtype=float))
    if z.shape != (model.obs_dim,):
        raise ConfigurationError(f"observation has shape {z.shape}, expected ({model.obs_dim},)")
    if predicted.dim != model.state_dim:
        raise ConfigurationError(f"state has length {predicted.dim}, model expects {model.state_dim}")

    H, R = model.obs_matrix, model.obs_noise_cov
    x, P = predicted.mean, predicted.covariance

    Re = _symmetrize(H @ P @ H.T + R)
    try:
        L = np.linalg.cholesky(Re)
    except np.linalg.LinAlgError:
        raise NumericalDivergenceError("innovation covariance is not positive definite") from None
    e = z - H @ x
    # K = P H' Re^{-1}, computed through the Cholesky factor of Re
    PHt = P @ H.T
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    mean = x + K @ e
    cov = _symmetrize((np.eye(model.state_dim) - K @ H) @ P)

    white = np.linalg.solve(L, e)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    loglik = -0.5 * logdet - 0.5 * float(white @ white)

    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov)) and np.isfinite(loglik)):
        raise NumericalDivergenceError("measurement update produced non-finite values")
    return StateEstimate(mean, cov, predicted.time_index), Innovation(e, Re, loglik)


def run_filter(
    model: ModelDefinition, observations: Sequence | np.ndarray, init: StateEstimate
) -> FilterRun:
    """Alternate predict/update over ``observations`` starting from ``init``.

    Divergence errors are re-raised with the zero-based index of the failing
    observation.
    """
    obs = np.asarray(observations, dtype=float)
    if obs.ndim == 1:
        obs = obs.reshape(-1, 1) if model.obs_dim == 1 or obs.size == 0 else obs.reshape(1, -1)
    n, m = model.state_dim, model.obs_dim
    N = obs.shape[0]
    if N and obs.shape[1] != m:
        raise ConfigurationError(f"observations have width {obs.shape[1]}, model expects {m}")

    pm = np.empty((N, n))
    pc = np.empty((N, n, n))
    fm = np.empty((N, n))
    fc = np.empty((N, n, n))
    inn = np.empty((N, m))
    ic = np.empty((N, m, m))
    ll = np.empty(N)

    est = init
    for k in range(N):
        try:
            pred = ekf_predict(model, est)
            est, innovation = ekf_update(model, pred, obs[k])
        except NumericalDivergenceError as exc:
            raise NumericalDivergenceError(str(exc), step=k) from exc
        pm[k], pc[k] = pred.mean, pred.covariance
        fm[k], fc[k] = est.mean, est.covariance
        inn[k], ic[k] = innovation.residual, innovation.variance
        ll[k] = innovation.loglik_increment

    return FilterRun(pm, pc, fm, fc, inn, ic, ll, float(np.sum(ll)), init.time_index)
