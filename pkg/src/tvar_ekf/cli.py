"""Command-line pipelines: ``stats``, ``rolling``, ``fit``, ``compare``, ``simulate``.

Scalar reports are ``key=value`` lines; paths are comma-delimited with a
header. Undefined values are written as empty fields.

Exit codes: 0 success, 2 input error, 3 configuration error, 4 numerical
divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from . import calibration, diagnostics, ingest
from .errors import ConfigurationError, DomainError, InputError, NumericalDivergenceError
from .models import DEFAULT_OBS_NOISE, PARAMS_BY_KIND, ModelKind, simulate, unconditional_variance

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_DIVERGENCE = 4

TABLE_LAGS = (1, 10, 15)
NESTED_PAIRS = {frozenset({ModelKind.TVAR1, ModelKind.TVAR1_TREND})}


@dataclass
class RunConfig:
    command: str
    input: Path | None = None
    model_kind: ModelKind = ModelKind.TVAR1
    window: int = 80
    alpha: float = 0.01
    obs_noise: float = DEFAULT_OBS_NOISE
    theta0: list[float] | None = None
    output: Path | None = None
    seed: int | None = None
    method: str = "ekf"
    n_obs: int = 1100
    fit_a: Path | None = None
    fit_b: Path | None = None


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if not math.isfinite(value) else repr(float(value))
    return str(value)


def format_report(items: Sequence[tuple[str, object]]) -> str:
    return "".join(f"{k}={fmt(v)}\n" for k, v in items)


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"not a key=value line: {line!r}")
        out[key.strip()] = value.strip()
    return out


def _emit(text: str, output: Path | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text, encoding="utf-8")


def _write_csv(header: Sequence[str], rows, output: Path | None) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    _emit(buf.getvalue(), output)


def _load_returns(config: RunConfig) -> ingest.ReturnSeries:
    if config.input is None:
        raise ConfigurationError("--input is required")
    return ingest.log_returns(ingest.load_prices(config.input))


def cmd_stats(config: RunConfig) -> int:
    returns = _load_returns(config)
    n = len(returns)
    s = diagnostics.summary_stats(returns)
    items: list[tuple[str, object]] = [
        ("n_obs", s.n_obs),
        ("mean", s.mean),
        ("median", s.median),
        ("std_dev", s.std_dev),
        ("skewness", s.skewness),
        ("excess_kurtosis", s.excess_kurtosis),
    ]
    for lag in TABLE_LAGS:
        items.append((f"rho_{lag}", diagnostics.sample_autocorrelation(returns, lag) if lag < n else None))
    for lag in TABLE_LAGS:
        q = p = None
        if lag < n:
            q, p = diagnostics.ljung_box(returns, lag)
        items += [(f"q_{lag}", q), (f"p_{lag}", p)]
    _emit(format_report(items), config.output)
    return EXIT_OK


def _rolling(config: RunConfig, returns: ingest.ReturnSeries) -> diagnostics.RollingResult:
    if not 1 < config.window <= len(returns):
        raise ConfigurationError(f"window {config.window} must lie in [2, N={len(returns)}]")
    return diagnostics.rolling_autocorrelation(returns, config.window, 1, config.alpha)


def cmd_rolling(config: RunConfig) -> int:
    returns = _load_returns(config)
    roll = _rolling(config, returns)
    b = roll.confidence_bound
    rows = (
        (returns.labels[i], r, -b, b, p)
        for i, r, p in zip(roll.indices, roll.rho_path, roll.pvalue_path)
    )
    _write_csv(("date", "rho1", "lower", "upper", "pvalue"), rows, config.output)
    return EXIT_OK


def path_file_for(output: Path | None) -> Path | None:
    if output is None:
        return None
    return output.with_name(output.stem + ".path.csv")


def cmd_fit(config: RunConfig) -> int:
    returns = ingest.mean_adjust(_load_returns(config))
    roll = _rolling(config, returns)
    spec = calibration.ParameterSpec.default(
        config.model_kind, config.theta0, config.obs_noise, config.method
    )
    fit = calibration.fit_mle(spec, returns)
    if fit.max_loglik <= calibration.DIVERGENCE_LOGLIK:
        raise NumericalDivergenceError("no finite likelihood found in the parameter box")
    beta = calibration.beta_path(spec, fit.theta_hat, returns)
    recon = calibration.reconstruction_error(beta, roll.rho_path, config.window)

    path_file = path_file_for(config.output)
    items: list[tuple[str, object]] = [
        ("model", fit.model_kind.value),
        ("method", spec.method),
        ("n_obs", fit.n_obs),
        ("k", fit.n_params),
        ("converged", fit.converged),
        ("iterations", fit.iterations),
        ("max_loglik", fit.max_loglik),
        ("aic", fit.aic),
        ("obs_noise", spec.obs_noise),
        ("window", config.window),
        ("reconstruction_error", recon),
        ("original_mean", returns.original_mean),
    ]
    for name, value, se in zip(fit.names, fit.theta_hat, fit.stderr):
        items += [(f"theta.{name}", value), (f"stderr.{name}", se)]
    if fit.model_kind is ModelKind.TVAR1_GARCH:
        p = fit.as_dict()
        items.append(("unconditional_variance", unconditional_variance(p["omega"], p["a1"], p["b1"])))
    if path_file is not None:
        items.append(("path_file", path_file.name))
    if config.seed is not None:
        items.append(("seed", config.seed))
    _emit(format_report(items), config.output)

    rho = np.full(len(returns), np.nan)
    rho[roll.indices] = roll.rho_path
    rows = zip(returns.labels, returns.values, beta, rho)
    if path_file is not None:
        _write_csv(("date", "return", "beta1", "rho1"), rows, path_file)
    return EXIT_OK


def _read_fit(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    rep = parse_report(path.read_text(encoding="utf-8"))
    for key in ("model", "k", "max_loglik", "aic"):
        if not rep.get(key):
            raise InputError(f"{path}: fit report lacks {key!r}")
    return rep


def compare_reports(a: dict[str, str], b: dict[str, str], alpha: float, labels=("a", "b")) -> str:
    fits = []
    for label, rep in zip(labels, (a, b)):
        fits.append(
            {
                "label": label,
                "kind": ModelKind.parse(rep["model"]),
                "k": int(rep["k"]),
                "loglik": float(rep["max_loglik"]),
                "aic": float(rep["aic"]),
            }
        )
    lines = ["[aic]"]
    ranked = sorted(fits, key=lambda f: f["aic"])
    for rank, f in enumerate(ranked, start=1):
        lines.append(
            f"{rank}. {f['label']} model={f['kind'].value} k={f['k']} "
            f"max_loglik={fmt(f['loglik'])} aic={fmt(f['aic'])}"
        )
    if abs(fits[0]["aic"] - fits[1]["aic"]) <= 1e-9:
        lines.append("preferred=tie")
    else:
        lines.append(f"preferred={ranked[0]['label']}")

    lines.append("[lr]")
    restricted, full = sorted(fits, key=lambda f: f["k"])
    dof = full["k"] - restricted["k"]
    nested = frozenset({restricted["kind"], full["kind"]}) in NESTED_PAIRS
    if not nested or dof < 1:
        lines.append("note=LR test omitted: models are not nested")
    else:
        stat, p = calibration.lr_test(restricted["loglik"], full["loglik"], dof)
        level = f"{alpha * 100:g}%"
        verdict = "rejected" if p < alpha else "not rejected"
        lines += [
            f"restricted={restricted['label']}",
            f"full={full['label']}",
            f"dof={dof}",
            f"statistic={fmt(stat)}",
            f"p_value={fmt(p)}",
            f"H0 {verdict} at {level}",
        ]
    return "\n".join(lines) + "\n"


def cmd_compare(config: RunConfig, fit_a: Path | None = None, fit_b: Path | None = None) -> int:
    fit_a = fit_a or config.fit_a
    fit_b = fit_b or config.fit_b
    if fit_a is None or fit_b is None:
        raise ConfigurationError("compare needs --fit-a and --fit-b")
    text = compare_reports(_read_fit(fit_a), _read_fit(fit_b), config.alpha)
    sys.stdout.write(text)
    if config.output is not None:
        config.output.write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    """Write a synthetic ``date,close,beta_true`` price file from one model."""
    kind = config.model_kind
    cls = PARAMS_BY_KIND[kind]
    if config.theta0 is None:
        raise ConfigurationError("simulate needs the true parameters via --theta0")
    params = cls.from_vector(config.theta0)
    rng = np.random.default_rng(config.seed)
    y, beta = simulate(kind, params, config.n_obs, rng)
    closes = 100.0 * np.exp(np.concatenate([[0.0], np.cumsum(y)]))
    dates = ingest.monthly_dates(date(1900, 1, 1), closes.size)
    beta_col = np.concatenate([[np.nan], beta])
    rows = ((d.strftime("%Y-%m"), c, b) for d, c, b in zip(dates, closes, beta_col))
    _write_csv(("date", "close", "beta_true"), rows, config.output)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _theta(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kind(text: str) -> ModelKind:
    try:
        return ModelKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tvar-ekf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, input_required=True):
        p.add_argument("--input", type=Path, required=input_required, help="price file with date,close columns")
        p.add_argument("--output", type=Path, help="output file (default: standard output)")
        p.add_argument("--window", type=int, default=80)
        p.add_argument("--alpha", type=float, default=0.01)
        p.add_argument("--obs-noise", type=float, default=DEFAULT_OBS_NOISE)
        p.add_argument("--model", type=_kind, default=ModelKind.TVAR1,
                       help="tvar1 | tvar1-trend | tvar1-garch")
        p.add_argument("--theta0", type=_theta, help="comma-separated parameter vector")
        p.add_argument("--seed", type=int)

    common(sub.add_parser("stats", help="summary statistics and Ljung-Box tests"))
    common(sub.add_parser("rolling", help="moving-window lag-1 autocorrelation path"))
    p = sub.add_parser("fit", help="maximum-likelihood fit and filtered coefficient path")
    common(p)
    p.add_argument("--method", choices=calibration.FILTER_METHODS, default="ekf")
    p = sub.add_parser("compare", help="AIC ranking and LR test of two fit reports")
    common(p, input_required=False)
    p.add_argument("--fit-a", type=Path, required=True)
    p.add_argument("--fit-b", type=Path, required=True)
    p = sub.add_parser("simulate", help="synthetic price file from a model")
    common(p, input_required=False)
    p.add_argument("--n-obs", type=int, default=1100, help="number of returns")
    return parser


COMMANDS = {
    "stats": cmd_stats,
    "rolling": cmd_rolling,
    "fit": cmd_fit,
    "compare": cmd_compare,
    "simulate": cmd_simulate,
}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        input=args.input,
        model_kind=args.model,
        window=args.window,
        alpha=args.alpha,
        obs_noise=args.obs_noise,
        theta0=args.theta0,
        output=args.output,
        seed=args.seed,
        method=getattr(args, "method", "ekf"),
        n_obs=getattr(args, "n_obs", 1100),
        fit_a=getattr(args, "fit_a", None),
        fit_b=getattr(args, "fit_b", None),
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = config_from_args(args)
    try:
        return COMMANDS[config.command](config)
    except InputError as exc:
        print(f"tvar-ekf: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalDivergenceError as exc:
        print(f"tvar-ekf: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigurationError, DomainError) as exc:
        print(f"tvar-ekf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
