"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class FormatError(ValueError):
    """A binary file is malformed. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataError(ValueError):
    """Features and captions are inconsistent for some image."""


class ContractViolation(RuntimeError):
    """An API precondition was broken by the caller."""
