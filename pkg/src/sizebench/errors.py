"""Exception hierarchy.

``ValidationError`` covers bad inputs (the CLI maps it to exit code 1);
``ComputationError`` covers numerical failures on valid inputs (exit code 2).
"""


class SizebenchError(Exception):
    pass


class ValidationError(SizebenchError, ValueError):
    pass


class ComputationError(SizebenchError, RuntimeError):
    pass


class DomainError(ValidationError):
    """Argument outside the mathematical domain of the function."""


class InsufficientData(ValidationError):
    pass


class DateMisalignment(ValidationError):
    pass
