"""Exception types shared across the engine, scorer and tooling."""


class StreamDiarError(Exception):
    """Base class for all errors raised by this package."""


class BoundOrderingError(StreamDiarError):
    """Clustering bounds violate the required ordering L <= U1 < U2."""


class EmptyGridError(StreamDiarError):
    """Auto-tune percentile grid is empty or not strictly increasing."""


class EmptyInputError(StreamDiarError):
    """An operation that requires at least one item received none."""


class InvalidRecordError(StreamDiarError):
    """An embedding record violates its time-span or norm invariants."""


class DimensionMismatchError(StreamDiarError):
    """Embedding vectors of differing dimension were mixed."""


class TargetTooLargeError(StreamDiarError):
    """Requested cluster count exceeds the number of inputs."""


class EmptyClusterError(StreamDiarError):
    """A labeling referenced a cluster with no members."""


class TooFewInputsError(StreamDiarError):
    """Spectral clustering requires at least two inputs."""


class TooFewEigenvaluesError(StreamDiarError):
    """Eigen-gap estimation requires at least two eigenvalues."""


class NumericalError(StreamDiarError):
    """A numeric routine (eigendecomposition) failed to converge."""


class KTooLargeError(StreamDiarError):
    """k-means received k larger than the number of points."""


class SizeMismatchError(StreamDiarError):
    """Compression invoked with an effective input count != U2."""


class IncompleteMappingError(StreamDiarError):
    """Label expansion left at least one original input unmapped."""


class MalformedLineError(StreamDiarError):
    """An RTTM/UEM/JSONL line could not be parsed."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class NoScoredTimeError(StreamDiarError):
    """The scored region contains no reference speaker time."""


class EmptySessionError(StreamDiarError):
    """finalize() called on a session that never received a record."""


class InfeasibleAngleError(StreamDiarError):
    """Requested speaker directions cannot be packed at the given angle."""


class ConfigFileError(StreamDiarError):
    """A configuration file is missing a field or has a bad value."""
