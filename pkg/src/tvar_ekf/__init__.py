"""Extended Kalman filtering of time-varying AR(1) market-efficiency models."""

from .calibration import (
    FitResult,
    ParameterSpec,
    aic,
    beta_path,
    filter_at,
    fit_mle,
    log_likelihood,
    lr_test,
    reconstruction_error,
    standard_errors,
)
from .diagnostics import (
    RollingResult,
    SummaryStats,
    chi2_sf,
    ljung_box,
    rolling_autocorrelation,
    sample_autocorrelation,
    summary_stats,
)
from .ingest import PriceSeries, ReturnSeries, load_prices, log_returns, mean_adjust
from .models import (
    CompanionArParams,
    ModelKind,
    TvAr1GarchParams,
    TvAr1Params,
    TvAr1TrendParams,
    build_companion_ar,
    build_tvar1,
    build_tvar1_garch,
    build_tvar1_trend,
    initial_conditions,
    simulate,
)
from .statespace import FilterRun, Innovation, ModelDefinition, StateEstimate, ekf_predict, ekf_update, run_filter

__version__ = "0.1.0"
