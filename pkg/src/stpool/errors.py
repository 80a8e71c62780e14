"""Exception types shared across the package.

The CLI maps these onto exit codes (config 2, data 3, numeric 4); library
code raises them directly.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataError(ValueError):
    """Malformed or contract-violating input data."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required (e.g. NaN loss)."""


class EmptySetError(DataError):
    """An operation that needs at least one element received none."""
