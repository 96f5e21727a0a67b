"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class DegenerateInput(ValueError):
    """The input lies on a set where the operation is undefined (e.g. 0/0)."""


class DomainError(ValueError):
    """A scalar argument falls outside the function's domain."""


class InfeasibleError(RuntimeError):
    """The sign-constrained program has no feasible point within tolerance."""

    def __init__(self, message, residual=None, batch=None):
        super().__init__(message)
        self.residual = residual
        self.batch = batch


class NumericalError(RuntimeError):
    """An iterative solve failed to reach its accuracy target."""


class FormatError(ValueError):
    """A binary record or fixture file is malformed."""
