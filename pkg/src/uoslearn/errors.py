"""Exception types shared across the package."""


class UosError(Exception):
    """Base class for all package errors."""


class DimensionError(UosError, ValueError):
    """Empty input, shape mismatch, or an out-of-range size parameter."""


class DataError(UosError, ValueError):
    """Invalid or degenerate data: NaN/Inf entries, zero columns, rank-collapsed clusters."""


class ConfigError(UosError, ValueError):
    """Inconsistent or missing configuration."""


class NumericalError(UosError, RuntimeError):
    """Numerical failure inside an iterative routine (non-finite iterates)."""
