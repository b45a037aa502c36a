"""Exception hierarchy shared by the numerical modules and the CLI.

Each class carries the process exit code the CLI maps it to.
"""


class QcritError(Exception):
    exit_code = 2


class SchemaError(QcritError):
    """Malformed run configuration or input document."""

    exit_code = 1

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DomainError(QcritError, ValueError):
    """Inputs outside the validity domain of a formula or model."""

    exit_code = 2


class InvalidDimensionError(DomainError):
    pass


class NumericalError(QcritError, ArithmeticError):
    """A linear-algebra or integration step failed its own accuracy check."""

    exit_code = 3


class ConvergenceError(NumericalError):
    exit_code = 3


class UnstableDerivativeError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class DegenerateGroundStateError(NumericalError):
    pass
