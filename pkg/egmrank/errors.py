__all__ = (
    "EgmRankException",
    "DataError",
    "NumericalError",
    "InvalidTissueError",
    "PatchOverlapError",
    "InvalidTemplateError",
    "EnvelopeError",
    "InsufficientDurationError",
    "InvalidArrayError",
    "InvalidRecordingError",
    "ShapeMismatchError",
    "InvalidBandError",
    "FilterInstabilityError",
    "InvalidWindowError",
    "LayoutMismatchError",
    "InvalidSubsetError",
    "InsufficientGroupError",
    "LabelError",
    "FormatError",
    "MagicMismatchError",
    "UnsupportedVersionError",
    "TruncatedFileError",
    "TrailingBytesError",
    "NonFiniteSampleError",
    "CSVParseError",
    "AnnotationError",
    "ScenarioError",
    "ManifestError",
    "ConvergenceError",
)


# pylint: disable=unnecessary-pass
class EgmRankException(Exception):
    """BASE exception class for egmrank"""

    def __init__(self, *args):
        if args:
            message = args[0]
        else:
            message = None

        super().__init__(message)


class DataError(EgmRankException):
    """BASE exception class for invalid input data, models and files"""


class NumericalError(EgmRankException):
    """BASE exception class for numerical failures"""


class InvalidTissueError(DataError):
    """Raised when a tissue model violates its invariants."""


class PatchOverlapError(InvalidTissueError):
    """Raised when two overlapping tissue patches disagree on their value."""

    def __init__(self, message: str, patch: str, other: str):
        super().__init__(message)
        self.patch = patch
        self.other = other


class InvalidTemplateError(DataError):
    """Raised when an action potential template violates its invariants."""


class EnvelopeError(InvalidTemplateError):
    """Raised when a template duration cannot hold the waveform envelope."""


class InsufficientDurationError(DataError):
    """Raised when a synthesis window is shorter than the latest activation."""

    def __init__(self, message: str, cell: int | None = None):
        super().__init__(message)
        self.cell = cell


class InvalidArrayError(DataError):
    """Raised when an electrode array violates its invariants."""


class InvalidRecordingError(DataError):
    """Raised when a recording violates its invariants."""


class ShapeMismatchError(DataError):
    """
    .. versionadded :: 0.1.0

    Raised when two operands have incompatible shapes

    Parameters
    ----------
    left : tuple[int, ...]
        The shape of the first operand
    right : tuple[int, ...]
        The shape of the second operand
    what : str
        What was being combined
    """

    def __init__(self, left: tuple, right: tuple, what: str = "operands"):
        super().__init__(f"{what}: {left} vs {right}")
        self.left = tuple(left)
        self.right = tuple(right)
        self.what = what

    def __str__(self) -> str:
        return f"Shape mismatch in {self.what}: {self.left} vs {self.right}"


class InvalidBandError(DataError):
    """Raised when a filter band is outside (0, rate/2) or inverted."""


class FilterInstabilityError(NumericalError):
    """Raised when a designed filter has a pole on or outside the unit circle."""


class InvalidWindowError(DataError):
    """Raised when a beat window definition does not give an even sample count."""


class LayoutMismatchError(DataError):
    """Raised when a layout does not match the number of channels."""


class InvalidSubsetError(DataError):
    """Raised when a channel subset has invalid or repeated indices."""


class InsufficientGroupError(DataError):
    """Raised when a statistical group is too small for the test."""


class LabelError(DataError):
    """Raised when a label is outside its declared vocabulary."""


class FormatError(DataError):
    """BASE exception class for malformed files"""


class MagicMismatchError(FormatError):
    """Raised when a recording file does not start with the expected magic."""


class UnsupportedVersionError(FormatError):
    """Raised when a recording file declares an unknown format version."""


class TruncatedFileError(FormatError):
    """
    .. versionadded :: 0.1.0

    Raised when a file holds fewer bytes than its header declares

    Parameters
    ----------
    expected : int
        The number of bytes the header declares
    actual : int
        The number of bytes present
    """

    def __init__(self, expected: int, actual: int, path: str = ""):
        super().__init__(f"expected {expected} bytes, found {actual}")
        self.expected = expected
        self.actual = actual
        self.path = path

    def __str__(self) -> str:
        where = f" in {self.path}" if self.path else ""
        return f"Truncated payload{where}: expected {self.expected} bytes, found {self.actual}"


class TrailingBytesError(TruncatedFileError):
    """Raised when a file holds more bytes than its header declares."""

    def __str__(self) -> str:
        where = f" in {self.path}" if self.path else ""
        return f"Trailing bytes{where}: expected {self.expected} bytes, found {self.actual}"


class NonFiniteSampleError(FormatError):
    """Raised when a recording contains NaN or infinite samples."""


class CSVParseError(FormatError):
    """
    .. versionadded :: 0.1.0

    Raised when a CSV file cannot be parsed

    Parameters
    ----------
    line : int
        The 1-based line number of the offending row
    reason : str
        What went wrong
    """

    def __init__(self, line: int, reason: str, path: str = ""):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason
        self.path = path

    def __str__(self) -> str:
        where = f"{self.path}:" if self.path else "line "
        return f"{where}{self.line}: {self.reason}"


class AnnotationError(FormatError):
    """Raised when an annotation file is malformed."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ScenarioError(FormatError):
    """
    .. versionadded :: 0.1.0

    Raised when a scenario configuration is invalid

    Parameters
    ----------
    section : str
        The section that holds the problem
    key : str | None
        The offending key, ``None`` when the whole section is at fault
    reason : str
        What went wrong
    """

    def __init__(self, section: str, key: str | None, reason: str):
        super().__init__(reason)
        self.section = section
        self.key = key
        self.reason = reason

    def __str__(self) -> str:
        if self.key is None:
            return f"[{self.section}]: {self.reason}"
        return f"[{self.section}] {self.key}: {self.reason}"


class ManifestError(FormatError):
    """Raised when a run manifest cannot be replayed."""


class ConvergenceError(NumericalError):
    """Raised when an iterative kernel fails to converge."""
