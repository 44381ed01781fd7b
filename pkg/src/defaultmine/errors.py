"""Exception types shared across the package.

``ConfigError`` and ``InputError`` (with its subclasses) signal bad inputs or
configuration and map to CLI exit code 1; every other ``DefaultMineError``
is a runtime failure and maps to exit code 2.
"""


class DefaultMineError(Exception):
    """Base class for all package errors."""


class InputError(DefaultMineError):
    """Unusable input file: empty, unreadable, or structurally wrong."""


class SchemaError(InputError):
    """A required column is missing or mis-named."""


class RowError(InputError):
    """A data row could not be parsed."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(DefaultMineError):
    """Invalid run configuration or rule/cause catalog."""


class DegenerateRangeError(DefaultMineError):
    """A rescale source range has zero width."""


class BinningError(DefaultMineError):
    """Equal-frequency binning was asked for an impossible split."""


class TrainingError(DefaultMineError):
    """The classifier cannot be trained on the given data."""


class PredictionError(DefaultMineError):
    """A prediction was requested from an unfitted or mismatched model."""


class ContextError(DefaultMineError):
    """A transaction references an account with no known context."""


class ContractError(DefaultMineError):
    """An internal call violated a documented precondition."""


class StateError(DefaultMineError):
    """The risk state store was asked about an unknown account."""


class SyncError(DefaultMineError):
    """A month-end state sync received an incompatible offline batch."""


class RunError(DefaultMineError):
    """Batch inputs to a pipeline run are misaligned."""


class MetricError(DefaultMineError):
    """Metrics were requested for an empty evaluation."""


class BenchWarning(UserWarning):
    """Benchmark timings are too close to the timer resolution."""
