"""Exception classes shared across the pipeline.

The CLI maps these onto exit codes (config -> 2, data -> 3, numeric -> 4),
so library code should prefer them over bare ValueError when the failure is
attributable to user input or to training divergence.
"""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""


class DataError(ValueError):
    """Input data is missing, unreadable, or violates a dataset invariant."""


class NumericError(RuntimeError):
    """Training or inference produced non-finite values."""
