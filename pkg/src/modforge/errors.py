"""Exception types shared across the package."""


class ModforgeError(Exception):
    """Base class for all package errors."""


class ConfigError(ModforgeError, ValueError):
    """Invalid configuration, spec, or model/modality mismatch."""


class DimensionError(ModforgeError, ValueError):
    """Tensor shapes are incompatible for an operation."""


class UsageError(ModforgeError, RuntimeError):
    """An API was called in a state where it cannot work."""


class NumericError(ModforgeError, ArithmeticError):
    """A NaN/Inf or singular system was encountered."""


class DegenerateError(NumericError):
    """A quantity is undefined because its denominator vanished."""


class FormatError(ModforgeError, ValueError):
    """A binary file is malformed. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
