"""Exception types shared across the package."""


class CtrlvidError(Exception):
    """Base class for all package errors."""


class ShapeError(CtrlvidError):
    """Operand shapes are incompatible."""


class IndexErrorWithId(CtrlvidError, IndexError):
    """An id fell outside its table; message names the offending id."""


class EmptyMaskError(CtrlvidError):
    """A loss mask selected no positions."""


class ConfigError(CtrlvidError):
    """A configuration value is invalid or inconsistent."""


class ValidationError(CtrlvidError):
    """User-supplied data failed validation; message names the field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class GenerationError(CtrlvidError):
    """Scene generation could not satisfy its constraints."""


class FormatError(CtrlvidError):
    """A serialized file is malformed or has the wrong version."""


class UndefinedMetricError(CtrlvidError):
    """A metric was requested on inputs where it is undefined."""


class StorageError(CtrlvidError):
    """Reading or writing a file failed; message names the path."""
