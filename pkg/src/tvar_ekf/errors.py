"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class TvarEkfError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(TvarEkfError):
    """Inconsistent dimensions or invalid run configuration."""


class DomainError(TvarEkfError, ValueError):
    """An argument lies outside the domain of an operation."""


class ParameterDomainError(DomainError):
    """A parameter vector lies outside its admissible domain."""


class NonstationarityError(ParameterDomainError):
    """GARCH persistence a1 + b1 is not below one."""


class NumericalDivergenceError(TvarEkfError, ArithmeticError):
    """A filter quantity became non-finite or lost positive definiteness."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class InputError(TvarEkfError):
    """Malformed or missing input data."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataDomainError(InputError, DomainError):
    """Input data violates a domain constraint, e.g. a nonpositive price."""


class NegativeVarianceWarning(RuntimeWarning):
    """A predicted conditional variance was clamped at its floor."""
