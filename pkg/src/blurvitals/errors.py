"""Exception hierarchy shared across modules.

The CLI maps these onto exit codes: ValidationError -> 2, DataError -> 3,
and OSError -> 4.
"""


class BlurVitalsError(Exception):
    """Base class for all package errors."""


class ValidationError(BlurVitalsError, ValueError):
    """Bad configuration or arguments, detected before any work is done."""


class DataError(BlurVitalsError):
    """Input data is malformed, truncated or too short."""


class FormatError(DataError):
    """Container header is not recognised."""


class TruncationError(DataError):
    def __init__(self, message, frame_index):
        super().__init__(message)
        self.frame_index = frame_index


class InsufficientDataError(DataError):
    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required
