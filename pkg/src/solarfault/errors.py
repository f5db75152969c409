"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: data problems (parsing, schema,
splits, lookups) exit with 3, numeric failures (diverged training,
non-finite gradients) with 4.
"""


class SolarfaultError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SolarfaultError):
    """Problems with input data or its organization."""


class ParseError(DataError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class OrderingError(DataError):
    """Timestamps out of order or duplicated."""


class SchemaError(DataError):
    """Channel/status sets do not match the declared schema."""


class SplitError(DataError):
    """Train/validation/test system sets overlap or reference unknowns."""


class UnknownSystemError(DataError):
    """A referenced system id does not exist in the loaded data."""


class DegenerateChannelError(DataError):
    """A channel has zero spread and cannot be normalized."""


class ParameterError(SolarfaultError):
    """An argument is outside its documented domain."""


class ShapeError(SolarfaultError):
    """Array shapes are inconsistent."""


class UndefinedMetricError(SolarfaultError):
    """A metric is undefined for the given label distribution."""


class NumericError(SolarfaultError):
    """Numeric failure during optimization or scoring."""


class OptimizerError(NumericError):
    """Non-finite gradient or update."""


class TrainingError(NumericError):
    """Training loss became non-finite."""


class CheckpointError(SolarfaultError):
    """Checkpoint file is malformed or of an unsupported version."""
