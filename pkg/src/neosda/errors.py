"""Exception types shared across the toolkit.

Validation-type errors (bad inputs, bad config, malformed files) map to CLI
exit code 2; everything else is a runtime error (exit code 1).
"""


class ValidationError(ValueError):
    """Bad user input: config, file contents or violated preconditions."""


class EdfParseError(ValidationError):
    """Malformed EDF file; message names the offending byte offset."""


class ConfigError(ValidationError):
    """Run configuration failed schema validation."""


class DataError(ValidationError):
    """Inconsistent or insufficient data for the requested operation."""


class UndefinedMetricError(DataError):
    """Metric has no defined value on this input (e.g. AUC without seizure)."""


class ConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""
