"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class DavidError(Exception):
    """Base class for all errors raised by this package."""


class DataError(DavidError, ValueError):
    """Bad input data: unreadable CSV, wrong shapes, degenerate columns."""


class ConfigError(DavidError, ValueError):
    """Invalid or mutually inconsistent configuration."""


class NumericError(DavidError, ArithmeticError):
    """A numerical procedure failed (non-PD matrix, divergence, NaN loss)."""


class NotPositiveDefiniteError(NumericError):
    """Cholesky factorisation hit a non-positive pivot."""

    def __init__(self, pivot_index: int, pivot_value: float):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"matrix is not positive definite: pivot {pivot_index} = {pivot_value:.3e}"
        )
