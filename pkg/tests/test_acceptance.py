"""Acceptance criteria, one PASS/FAIL line each at the stated tolerances.

Criterion 8 needs the real monthly index closes and runs only when
``TVAR_EKF_SP500_CSV`` points at a ``date,close`` file; otherwise it is skipped.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import central_jacobian, density_sum, textbook_kalman
from tvar_ekf.calibration import (
    ParameterSpec,
    aic,
    beta_path,
    filter_at,
    fit_mle,
    lr_test,
    reconstruction_error,
)
from tvar_ekf.cli import main
from tvar_ekf.diagnostics import (
    chi2_sf,
    ljung_box_from_acf,
    normal_bound,
    rolling_autocorrelation,
    sample_autocorrelation,
    summary_stats,
)
from tvar_ekf.ingest import ReturnSeries, load_prices, log_returns, mean_adjust
from tvar_ekf.models import (
    CompanionArParams,
    TvAr1GarchParams,
    TvAr1Params,
    TvAr1TrendParams,
    build_companion_ar,
    build_tvar1,
    build_tvar1_garch,
    build_tvar1_trend,
    simulate,
)
from tvar_ekf.statespace import StateEstimate, run_filter

TRUE_THETA = TvAr1Params(sigma_w2=0.0004, sigma_eps2=0.00284, beta1_0=0.2)
DATA_ENV = "TVAR_EKF_SP500_CSV"


def record(criterion: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def max_abs(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def test_c1_oracle_equivalence():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0

    # companion AR(2) with measurement noise
    beta = [0.5, -0.3]
    model = build_companion_ar(CompanionArParams(beta), noise_vars=(0.7, 0.2))
    obs = rng.standard_normal(500)
    run = run_filter(model, obs, StateEstimate(np.zeros(2), np.eye(2)))
    F = model.drift_jacobian_state(None, 0)
    G = model.drift_jacobian_noise(None, 0)
    ref = textbook_kalman(F, G, model.process_noise_cov, model.obs_matrix, model.obs_noise_cov,
                          np.zeros(2), np.eye(2), obs)
    pairs = [
        (run.predicted_means, ref["pred_mean"]), (run.predicted_covs, ref["pred_cov"]),
        (run.filtered_means, ref["mean"]), (run.filtered_covs, ref["cov"]),
        (run.loglik_increments, ref["loglik"]),
    ]

    # tv-AR(1) with sigma_w2 = 0 and a known coefficient: the coefficient row is
    # frozen, so the linearisation is exact and equals a scalar AR(1) filter
    b, se2, r = 0.35, 0.00284, 1e-6
    tv = build_tvar1(TvAr1Params(0.0, se2, b), obs_noise=r)
    y = rng.normal(scale=0.05, size=501)
    run_tv = run_filter(tv, y[1:], StateEstimate(np.array([b, y[0]]), np.diag([0.0, 1.0])))
    ref_tv = textbook_kalman(np.array([[b]]), np.eye(1), np.array([[se2]]), np.eye(1), np.array([[r]]),
                             np.array([y[0]]), np.eye(1), y[1:])
    pairs += [
        (run_tv.filtered_means[:, 1:], ref_tv["mean"]), (run_tv.filtered_covs[:, 1:, 1:], ref_tv["cov"]),
        (run_tv.predicted_means[:, 1:], ref_tv["pred_mean"]), (run_tv.predicted_covs[:, 1:, 1:], ref_tv["pred_cov"]),
        (run_tv.loglik_increments, ref_tv["loglik"]), (run_tv.filtered_means[:, 0], b),
    ]
    worst = max(max_abs(a, e) for a, e in pairs)
    worst = max(worst, abs(run.total_loglik - ref["loglik"].sum()) / max(1.0, abs(run.total_loglik)))
    elapsed = time.perf_counter() - start
    record("1 oracle equivalence", worst <= 1e-12 and elapsed < 1.0,
           f"max deviation {worst:.2e} (<= 1e-12), {elapsed:.3f}s (< 1s)")


def test_c2_jacobians():
    rng = np.random.default_rng(2)
    garch = TvAr1GarchParams(0.2, 0.00006, 0.13495, 0.85318, 0.0004)
    builders = {
        "tvar1": build_tvar1(TRUE_THETA),
        "tvar1_trend": build_tvar1_trend(TvAr1TrendParams(0.0004, 0.00284, 0.2, -0.0002)),
        "tvar1_garch": build_tvar1_garch(garch),
    }
    start = time.perf_counter()
    failures = 0
    for model in builders.values():
        for _ in range(1000):
            x = np.array([rng.uniform(-1, 1), rng.normal(scale=0.05)])
            if model.state_dim == 3:
                x = np.append(x, rng.uniform(1e-4, 0.05))
            F_fd = central_jacobian(lambda s: model.drift(s, 0), x)
            G_fd = central_jacobian(lambda u: model.transition(x, u, 0), np.zeros(model.noise_dim))
            ok = np.allclose(model.drift_jacobian_state(x, 0), F_fd, rtol=1e-6, atol=1e-9) and np.allclose(
                model.drift_jacobian_noise(x, 0), G_fd, rtol=1e-6, atol=1e-9
            )
            failures += not ok
    elapsed = time.perf_counter() - start
    record("2 jacobians", failures == 0 and elapsed < 5.0,
           f"{failures} mismatching states of 3000, {elapsed:.2f}s (< 5s)")


def test_c3_likelihood_identity():
    rng = np.random.default_rng(3)
    y = rng.normal(scale=0.05, size=400)
    cases = {
        "tvar1": [0.0004, 0.00284, 0.2],
        "tvar1_trend": [0.0004, 0.00284, 0.2, -0.001],
        "tvar1_garch": [0.2, 0.0028, 0.1, 0.05, 0.0004],
    }
    worst = 0.0
    for kind, theta in cases.items():
        run, _ = filter_at(ParameterSpec.default(kind), theta, y)
        oracle = density_sum(run.innovations, run.innovation_covs)
        worst = max(worst, abs(run.total_loglik - oracle) / abs(oracle))
    record("3 likelihood identity", worst <= 1e-10, f"max relative gap {worst:.2e} (<= 1e-10)")


def test_c4_table_arithmetic():
    q, _ = ljung_box_from_acf([0.0832], 1112)
    p = chi2_sf(7.7268, 1)
    a3, a4 = aic(2687.96, 3), aic(2688.02, 4)
    ok = (
        abs(q - 7.7268) <= 0.02
        and abs(p - 0.0054) <= 0.0002
        and abs(a3 - (-5369.93)) <= 0.02
        and abs(a4 - (-5368.06)) <= 0.03
    )
    record("4 table arithmetic", ok, f"Q(1)={q:.4f} p={p:.5f} AIC3={a3:.2f} AIC4={a4:.2f}")


@pytest.fixture(scope="module")
def recovery():
    start = time.perf_counter()
    rows = []
    for seed in range(50):
        y, beta_true = simulate("tvar1", TRUE_THETA, 1100, np.random.default_rng(seed))
        # zero-mean model output goes straight to fit_mle; centring an explosive
        # path would inject a large offset into every observation
        returns = ReturnSeries.from_values(y)
        spec = ParameterSpec.default("tvar1")
        fit = fit_mle(spec, returns)
        beta_hat = beta_path(spec, fit.theta_hat, returns)
        err = np.abs(beta_hat - beta_true)
        rows.append((fit, float(err.max()), float(err[80:].max())))
    return rows, time.perf_counter() - start


def test_c5a_noise_variance_recovery(recovery):
    rows, elapsed = recovery
    hits = sum(abs(f.theta_hat[1] - TRUE_THETA.sigma_eps2) <= 2 * f.stderr[1] for f, _, _ in rows)
    record("5a sigma_eps2 recovery", hits >= 45 and elapsed < 300,
           f"{hits}/50 seeds within 2 SE (>= 45), {elapsed:.1f}s (< 300s)")


def test_c5b_coefficient_path_recovery(recovery):
    rows, _ = recovery
    errs = np.array([e for _, e, _ in rows])
    late = np.array([e for _, _, e in rows])
    hits = int(np.sum(errs < 0.5))
    record("5b beta path recovery", hits == 50,
           f"{hits}/50 seeds with sup|beta_hat - beta_true| < 0.5 (worst {errs.max():.3f}, "
           f"median {np.median(errs):.3f}); informational: {int(np.sum(late < 0.5))}/50 after step 80")


def test_c6_lr_consistency():
    worst_gap = math.inf
    valid = True
    for seed in range(10):
        y, _ = simulate("tvar1", TRUE_THETA, 600, np.random.default_rng(100 + seed))
        r = ReturnSeries.from_values(y)
        restricted = fit_mle(ParameterSpec.default("tvar1"), r)
        full = fit_mle(ParameterSpec.default("tvar1_trend", theta0=[*restricted.theta_hat, 0.0]), r)
        worst_gap = min(worst_gap, full.max_loglik - restricted.max_loglik)
        stat, p = lr_test(restricted.max_loglik, full.max_loglik, 1)
        valid &= stat >= 0.0 and 0.0 <= p <= 1.0
    record("6 LR consistency", worst_gap >= -1e-6 and valid,
           f"min(L_trend - L_tvar1) = {worst_gap:.2e} (>= -1e-6), statistic/p valid: {valid}")


def test_c7_rolling():
    rng = np.random.default_rng(7)
    y = rng.standard_normal(1112)
    roll = rolling_autocorrelation(y, 80, 1, 0.01)
    full = rolling_autocorrelation(y, y.size, 1, 0.01)
    bound = normal_bound(80, 0.01)
    ok = (
        len(roll) == 1112 - 80 + 1
        and bool(np.all(np.abs(roll.rho_path) <= 1.0))
        and len(full) == 1
        and full.rho_path[0] == sample_autocorrelation(y, 1)
        and abs(bound - 2.576 / math.sqrt(80)) <= 1e-3
    )
    record("7 rolling diagnostics", ok, f"{len(roll)} values, bound {bound:.5f}")


@pytest.mark.skipif(not os.environ.get(DATA_ENV), reason=f"set {DATA_ENV} to a monthly close-price file")
def test_c8_index_data():
    start = time.perf_counter()
    raw = log_returns(load_prices(Path(os.environ[DATA_ENV])))
    s = summary_stats(raw)
    r = mean_adjust(raw)
    roll = rolling_autocorrelation(r, 80, 1, 0.01)

    spec = ParameterSpec.default("tvar1")
    fit = fit_mle(spec, r)
    recon = reconstruction_error(beta_path(spec, fit.theta_hat, r), roll.rho_path, 80)

    recon_garch = {}
    for method in ("ekf", "kf"):
        g = ParameterSpec.default("tvar1_garch", method=method)
        gfit = fit_mle(g, r)
        recon_garch[method] = reconstruction_error(beta_path(g, gfit.theta_hat, r), roll.rho_path, 80)
    elapsed = time.perf_counter() - start

    checks = {
        "mean": abs(s.mean - 0.00476) <= 0.0005,
        "std": abs(s.std_dev - 0.05402) <= 0.0005,
        "skew": abs(s.skewness - (-0.62185)) <= 0.05,
        "kurt": abs(s.excess_kurtosis - 7.32653) <= 0.05,
        "sigma_eps2": abs(fit.theta_hat[1] - 0.00284) <= 0.1 * 0.00284,
        "maxL": abs(fit.max_loglik - 2687.96) <= 5.0,
        "recon": recon <= 0.35,
        "garch": recon_garch["ekf"] <= recon_garch["kf"],
        "runtime": elapsed < 600,
    }
    detail = (
        f"mean={s.mean:.5f} std={s.std_dev:.5f} skew={s.skewness:.4f} kurt={s.excess_kurtosis:.4f} "
        f"sigma_eps2={fit.theta_hat[1]:.5f} maxL={fit.max_loglik:.2f} recon={recon:.4f} "
        f"garch ekf/kf={recon_garch['ekf']:.4f}/{recon_garch['kf']:.4f} {elapsed:.0f}s; "
        f"failed: {[k for k, v in checks.items() if not v]}"
    )
    record("8 index data", all(checks.values()), detail)


def test_c9_determinism(tmp_path):
    prices = tmp_path / "prices.csv"
    assert main(["simulate", "--theta0", "0.0004,0.00284,0.2", "--n-obs", "400",
                 "--seed", "9", "--output", str(prices)]) == 0
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run / "fit.txt"
        out.parent.mkdir()
        assert main(["fit", "--input", str(prices), "--model", "tvar1-garch", "--seed", "9",
                     "--output", str(out)]) == 0
        outputs.append(sorted((p.name, p.read_bytes()) for p in out.parent.iterdir()))
    same = outputs[0] == outputs[1] and len(outputs[0]) == 2
    record("9 determinism", same, "byte-identical report and path files" if same else "outputs differ")
