from typing import Optional


class BandselError(Exception):
    """Base class for every error raised by bandsel."""


class DatasetFormatError(BandselError, ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class SizeMismatchError(DatasetFormatError):
    def __init__(self, path: str, expected_bytes: int, actual_bytes: int):
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        super().__init__(f"{path}: expected {expected_bytes} bytes from header, file has {actual_bytes} bytes")


class SolverError(BandselError):
    pass


class McmError(BandselError):
    pass


class ReliefError(BandselError, ValueError):
    pass


class SvmError(BandselError, ValueError):
    pass


class MetricsError(BandselError, ValueError):
    pass


class ConfigError(BandselError, ValueError):
    pass


class LeakageError(BandselError):
    """A test sample reached a ranker or trainer."""
