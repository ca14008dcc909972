"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs or configuration violate a documented constraint."""


class InvalidGroupError(ValidationError):
    pass


class InvalidBatchError(ValidationError):
    pass


class NumericError(ArithmeticError):
    """A non-finite value appeared where the math requires a finite one.

    ``where`` carries enough context (sequence index, token position, ...) to
    locate the offending entry.
    """

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where
