"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ParseError(ValueError):
    """A file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GuardError(RuntimeError):
    """Refusal: the request exceeds a configured size or safety guard."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""
