"""Exception hierarchy. Exit codes match the CLI contract (2 usage, 3 data, 4 numeric)."""


class DiscvcError(Exception):
    exit_code = 1


class UsageError(DiscvcError):
    """Invalid invocation or API misuse."""

    exit_code = 2


class ConfigurationError(UsageError):
    """A parameter value outside its legal range."""


class DataError(DiscvcError):
    """Unusable input data: files, shapes, degenerate corpora."""

    exit_code = 3


class DimensionError(DataError):
    """Array shapes that do not line up."""


class CheckpointError(DataError):
    """Malformed or incompatible checkpoint/container file."""


class NumericError(DiscvcError):
    exit_code = 4


class NonFiniteError(NumericError):
    """NaN or Inf produced by a forward computation."""
