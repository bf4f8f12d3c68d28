"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`CslidError`.
The CLI maps the three branches onto its exit codes: usage/configuration
problems exit 1, bad input data exits 2, anything else exits 3.
"""


class CslidError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CslidError, ValueError):
    """Invalid configuration or parameter combination."""


class InvalidParameterError(ConfigurationError):
    """A numeric parameter is outside its allowed range."""


class DataError(CslidError, ValueError):
    """Input data is malformed or inconsistent."""


class WavFormatError(DataError):
    """RIFF/WAVE header could not be parsed."""


class UnsupportedCodecError(DataError):
    """WAV sample encoding other than PCM16 or float32."""


class EmptyInputError(DataError):
    """Zero-length audio or an empty sequence where content is required."""


class TooShortError(DataError):
    """Audio clip shorter than one analysis window."""


class ContainerFormatError(DataError):
    """A binary container (SPEC/EMIT/LIDM) has a bad magic or is truncated."""


class InvalidLabelError(DataError):
    """A transcript character is outside the label alphabet."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DimensionError(DataError):
    """Array shapes or interval bounds do not match."""


class InvalidWarpError(DataError):
    """Time-warp center/displacement violates its preconditions."""


class InfeasibleTargetError(DataError):
    """CTC target cannot be aligned to the available number of frames.

    The loss for such a target is +inf; it is reported through this
    exception instead of silently propagating an infinite loss.
    """

    loss = float("inf")


class InsufficientOutputError(DataError):
    """A decode result lacks the frame path needed for frame-level scoring."""


class MissingPredictionError(DataError):
    """Prediction and reference utterance id sets differ."""

    def __init__(self, message, missing=(), extra=()):
        super().__init__(message)
        self.missing = tuple(missing)
        self.extra = tuple(extra)


class UndefinedMetricError(DataError):
    """A metric was requested on empty input."""


class OracleTooLargeError(CslidError):
    """Exhaustive enumeration requested beyond its size guard."""


class TrainingError(CslidError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StageError(CslidError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
