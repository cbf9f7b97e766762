"""Price file loading and log-return construction."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataDomainError, DomainError, InputError


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[date, ...]
    closes: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "closes", np.asarray(self.closes, dtype=float))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(d.isoformat() for d in self.dates))
        if len(self.dates) != self.closes.size or len(self.labels) != self.closes.size:
            raise DomainError("dates, labels and closes must have equal length")

    def __len__(self) -> int:
        return self.closes.size


@dataclass(frozen=True)
class ReturnSeries:
    dates: tuple[date, ...]
    values: np.ndarray
    mean_adjusted: bool = False
    original_mean: float = float("nan")
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(d.isoformat() for d in self.dates))

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_values(cls, values, start: date = date(1900, 1, 1)) -> "ReturnSeries":
        """Wrap bare values with consecutive synthetic monthly dates."""
        values = np.asarray(values, dtype=float)
        return cls(monthly_dates(start, values.size), values)


def monthly_dates(start: date, n: int) -> tuple[date, ...]:
    out = []
    y, m = start.year, start.month
    for _ in range(n):
        out.append(date(y, m, 1))
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return tuple(out)


def parse_date(text: str) -> date:
    """Parse ``YYYY-MM`` (first of month) or ``YYYY-MM-DD``."""
    text = text.strip()
    parts = text.split("-")
    if len(parts) == 2:
        return date(int(parts[0]), int(parts[1]), 1)
    return date.fromisoformat(text)


def load_prices(path, sep: str = ",", date_column: str = "date", close_column: str = "close") -> PriceSeries:
    """Read a delimited ``date,close`` file into a date-sorted :class:`PriceSeries`."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")

    rows: list[tuple[date, float, str, int]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=sep)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path} is empty", line=1)
        header = [h.strip().lower() for h in header]
        try:
            i_date = header.index(date_column)
            i_close = header.index(close_column)
        except ValueError:
            raise InputError(
                f"header must contain columns {date_column!r} and {close_column!r}", line=1
            ) from None
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                label = row[i_date].strip()
                d = parse_date(label)
                close = float(row[i_close])
            except (IndexError, ValueError) as exc:
                raise InputError(f"malformed row {row!r}: {exc}", line=line_no) from None
            if not math.isfinite(close) or close <= 0.0:
                raise DataDomainError(f"price must be positive, got {row[i_close]!r}", line=line_no)
            rows.append((d, close, label, line_no))

    order = sorted(range(len(rows)), key=lambda i: rows[i][0])
    if order != list(range(len(rows))):
        warnings.warn(f"{path}: rows were not in date order and have been sorted", UserWarning, stacklevel=2)
    rows = [rows[i] for i in order]
    for prev, cur in zip(rows, rows[1:]):
        if prev[0] == cur[0]:
            raise InputError(f"duplicate date {cur[2]}", line=cur[3])

    return PriceSeries(
        dates=tuple(r[0] for r in rows),
        closes=np.array([r[1] for r in rows], dtype=float),
        labels=tuple(r[2] for r in rows),
    )


def log_returns(prices: PriceSeries) -> ReturnSeries:
    if len(prices) < 2:
        raise DomainError("need at least two prices to form a return")
    c = prices.closes
    return ReturnSeries(prices.dates[1:], np.log(c[1:] / c[:-1]), labels=prices.labels[1:])


def mean_adjust(returns: ReturnSeries) -> ReturnSeries:
    """Subtract the sample mean; a no-op on an already adjusted series."""
    if returns.mean_adjusted:
        return returns
    if len(returns) == 0:
        raise DomainError("cannot mean-adjust an empty series")
    mu = float(np.mean(returns.values))
    return replace(returns, values=returns.values - mu, mean_adjusted=True, original_mean=mu)


def as_values(returns) -> np.ndarray:
    """Raw float array from a :class:`ReturnSeries` or any array-like."""
    return np.asarray(getattr(returns, "values", returns), dtype=float).ravel()
