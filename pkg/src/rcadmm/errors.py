"""Shared exception types."""


class IllConditionedError(RuntimeError):
    """Matrix too close to rank deficiency for a reliable solve."""


class SensitivityUnavailable(RuntimeError):
    """Singular-value spectrum too degenerate to differentiate the truncation."""


class NumericFailure(RuntimeError):
    """Numerical blow-up inside simulation or iteration."""


class ConfigError(ValueError):
    """Invalid or incomplete run configuration; message names the offending key."""
