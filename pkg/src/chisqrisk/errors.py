"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ConvergenceError(ArithmeticError):
    """An iterative evaluation exhausted its budget before meeting tolerance."""


class FactorizationError(ArithmeticError):
    """A covariance matrix could not be factorized as positive semidefinite."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class RareEventError(RuntimeError):
    """A probability underflowed or a Monte Carlo level fell below the event floor."""
