class ValidationError(ValueError):
    """Input data or arguments violate a documented contract."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(ArithmeticError):
    """A numerical routine produced a non-finite or singular state."""
