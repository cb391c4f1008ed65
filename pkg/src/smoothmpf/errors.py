"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MPFError(Exception):
    """Base class for all errors raised by smoothmpf."""


# numerical / fitting failures (CLI exit code 3)
class FitError(MPFError):
    pass


class RankDeficient(FitError):
    def __init__(self, message: str = "matrix is rank deficient", ahead: int | None = None):
        if ahead is not None:
            message = f"{message} (ahead index {ahead})"
        super().__init__(message)
        self.ahead = ahead


class InsufficientRows(FitError):
    def __init__(self, message: str = "not enough observed rows", ahead: int | None = None):
        if ahead is not None:
            message = f"{message} (ahead index {ahead})"
        super().__init__(message)
        self.ahead = ahead


class IncompleteResponses(FitError):
    pass


class NonConvergence(FitError):
    pass


class DegreesOfFreedomTooLarge(FitError):
    pass


# data / schema problems (CLI exit code 4)
class DataError(MPFError):
    pass


class ShapeMismatch(DataError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DuplicateRecord(DataError):
    pass


class UnknownVariable(DataError):
    pass


class EmptyDesign(DataError):
    pass


class AlignmentError(DataError):
    pass


class EmptyCalibrationSet(DataError):
    pass


class EmptyTestSet(DataError):
    pass
