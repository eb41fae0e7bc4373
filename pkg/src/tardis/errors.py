"""Exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
any other TardisError (or unexpected exception) -> 4.
"""


class TardisError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TardisError):
    """Invalid configuration, arguments, or usage."""


class DataError(TardisError):
    """Malformed or inconsistent input data."""


# --- dataset files ---------------------------------------------------------

class MalformedManifest(DataError):
    pass


class PayloadSizeMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    """A NaN or infinity in a binary payload. Carries the first offender."""

    def __init__(self, row, col, message=None):
        self.row = int(row)
        self.col = int(col)
        super().__init__(message or f"non-finite value at row {row}, col {col}")


class RaggedRow(DataError):
    pass


class HeaderMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingCoordinates(DataError):
    pass


class MissingLogits(DataError):
    pass


# --- pooling ----------------------------------------------------------------

class UnfittedPCA(ConfigError):
    pass


class EmptyTensor(DataError):
    pass


class TooFewSamples(DataError):
    pass


class ShapeMismatch(DataError):
    pass


# --- clustering -------------------------------------------------------------

class NoIdSamples(DataError):
    pass


class UnfittedModel(ConfigError):
    pass


# --- classifier -------------------------------------------------------------

class SingleClassTrainingSet(DataError):
    pass


# --- metrics ----------------------------------------------------------------

class SingleClass(DataError):
    pass


class LengthMismatch(DataError):
    pass


class DegenerateDistribution(DataError):
    pass


class TooFewRuns(DataError):
    pass


class EmptyStage(DataError):
    pass


# --- baselines --------------------------------------------------------------

class TooFewLogits(DataError):
    pass


class InvalidTemperature(ConfigError):
    pass


class SingularCovariance(DataError):
    pass


class TooFewSamplesPerClass(DataError):
    pass


# --- pipeline ---------------------------------------------------------------

class InvalidSpec(ConfigError):
    pass
