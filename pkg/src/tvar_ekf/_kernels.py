"""Compiled filter loops for the efficiency models.

These unroll the generic engine in :mod:`tvar_ekf.statespace` for the fixed
observation ``H = [0 1 (0)]`` so that likelihood evaluation is cheap enough
for optimisation. Each kernel writes the filtered coefficient path and the
innovations into caller-provided arrays and returns ``(loglik, failed_at)``,
where ``failed_at`` is the zero-based observation index of a divergence or -1.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

VARIANCE_FLOOR = 1e-12


@njit(cache=True)
def ekf_tvar1(y, beta0, beta_var, sigma_w2, sigma_eps2, mu, obs_noise, out_beta, out_e, out_re):
    x0 = beta0
    x1 = y[0]
    p00 = beta_var
    p01 = 0.0
    p11 = 1.0
    out_beta[0] = x0
    ll = 0.0
    for k in range(1, y.size):
        b = x0 + mu
        m1 = b * x1
        fp10 = x1 * p00 + b * p01
        fp11 = x1 * p01 + b * p11
        q00 = p00 + sigma_w2
        q01 = fp10 + x1 * sigma_w2
        q11 = fp10 * x1 + fp11 * b + (x1 * x1 * sigma_w2 + sigma_eps2)

        re = q11 + obs_noise
        if not (re > 0.0) or not math.isfinite(re):
            return ll, k - 1
        e = y[k] - m1
        k0 = q01 / re
        k1 = q11 / re
        x0 = b + k0 * e
        x1 = m1 + k1 * e
        p00 = q00 - k0 * q01
        p01 = 0.5 * ((q01 - k0 * q11) + (q01 - k1 * q01))
        p11 = q11 - k1 * q11
        ll += -0.5 * math.log(re) - 0.5 * e * e / re
        if not (math.isfinite(ll) and math.isfinite(x0) and math.isfinite(x1)):
            return ll, k - 1
        out_beta[k] = x0
        out_e[k - 1] = e
        out_re[k - 1] = re
    return ll, -1


@njit(cache=True)
def ekf_tvar1_garch(y, beta0, beta_var, omega, persistence, var0, sigma_w2, obs_noise,
                    out_beta, out_e, out_re):
    x = np.array([beta0, y[0], var0])
    P = np.eye(3)
    P[0, 0] = beta_var
    F = np.zeros((3, 3))
    G = np.zeros((3, 3))
    FP = np.zeros((3, 3))
    Pp = np.zeros((3, 3))
    m = np.zeros(3)
    q = np.array([sigma_w2, 1.0, 1.0])
    out_beta[0] = x[0]
    ll = 0.0
    for k in range(1, y.size):
        s2 = omega + persistence * x[2]
        if s2 < VARIANCE_FLOOR:
            s2 = VARIANCE_FLOOR
        F[0, 0] = 1.0
        F[1, 0] = x[1]
        F[1, 1] = x[0]
        F[2, 2] = persistence
        G[0, 0] = 1.0
        G[1, 0] = x[1]
        G[1, 1] = math.sqrt(s2)
        m[0] = x[0]
        m[1] = x[0] * x[1]
        m[2] = omega + persistence * x[2]
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for l in range(3):
                    acc += F[i, l] * P[l, j]
                FP[i, j] = acc
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for l in range(3):
                    acc += FP[i, l] * F[j, l]
                gq = 0.0
                for l in range(3):
                    gq += G[i, l] * q[l] * G[j, l]
                Pp[i, j] = acc + gq

        re = Pp[1, 1] + obs_noise
        if not (re > 0.0) or not math.isfinite(re):
            return ll, k - 1
        e = y[k] - m[1]
        for i in range(3):
            x[i] = m[i] + Pp[i, 1] / re * e
        for i in range(3):
            for j in range(3):
                P[i, j] = Pp[i, j] - Pp[i, 1] / re * Pp[1, j]
        for i in range(3):
            for j in range(i + 1, 3):
                s = 0.5 * (P[i, j] + P[j, i])
                P[i, j] = s
                P[j, i] = s
        ll += -0.5 * math.log(re) - 0.5 * e * e / re
        if not (math.isfinite(ll) and math.isfinite(x[0]) and math.isfinite(x[1]) and math.isfinite(x[2])):
            return ll, k - 1
        out_beta[k] = x[0]
        out_e[k - 1] = e
        out_re[k - 1] = re
    return ll, -1


@njit(cache=True)
def kf_regression(y, beta0, beta_var, sigma_w2, mu, garch, sigma_eps2, omega, a1, b1,
                  out_beta, out_e, out_re):
    """Linear KF treating the lagged return as a time-varying regressor.

    The coefficient is the only state; ``y[k] = y[k-1] * beta[k] + eps[k]``.
    With ``garch`` set, the variance of ``eps[k]`` follows a GARCH(1,1)
    recursion driven by past innovations, otherwise it is ``sigma_eps2``.
    """
    beta = beta0
    p = beta_var
    h = sigma_eps2
    if garch:
        h = omega / (1.0 - a1 - b1)
    out_beta[0] = beta
    ll = 0.0
    for k in range(1, y.size):
        bp = beta + mu
        pp = p + sigma_w2
        reg = y[k - 1]
        re = reg * reg * pp + h
        if not (re > 0.0) or not math.isfinite(re):
            return ll, k - 1
        e = y[k] - reg * bp
        gain = pp * reg / re
        beta = bp + gain * e
        p = pp * (1.0 - gain * reg)
        ll += -0.5 * math.log(re) - 0.5 * e * e / re
        if not (math.isfinite(ll) and math.isfinite(beta)):
            return ll, k - 1
        out_beta[k] = beta
        out_e[k - 1] = e
        out_re[k - 1] = re
        if garch:
            h = omega + a1 * e * e + b1 * h
    return ll, -1
