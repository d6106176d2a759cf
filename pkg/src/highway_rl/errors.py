"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 2,
artifact/compatibility problems exit 3, runtime training failures exit 4.
"""


class ConfigurationError(ValueError):
    """Invalid configuration value, dimension mismatch, or infeasible setup."""


class ContractViolation(RuntimeError):
    """An operation was called outside its documented preconditions."""


class FormatError(ValueError):
    """A persisted artifact does not match the expected schema or architecture."""


class TrainingError(RuntimeError):
    """Numerical failure during optimization (non-finite loss or gradient)."""
