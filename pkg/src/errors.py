"""
Error types
Exceptions raised across the library; the CLI maps them to exit codes
"""


class PriorShiftError(Exception):
    """Base class for library errors"""


class ValidationError(PriorShiftError):
    """Input data or arguments violate a documented contract"""


class DatasetParseError(ValidationError):
    """A CSV file could not be parsed"""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NumericalError(PriorShiftError):
    """A numerical procedure failed in a way that cannot be recovered"""
