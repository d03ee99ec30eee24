"""Exception types shared across the package."""


class WassactionError(Exception):
    """Base class for all package errors."""


class ValidationError(WassactionError, ValueError):
    """Input failed a structural or domain check."""


class EmptyMeasure(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class SolverFailure(WassactionError, RuntimeError):
    """The transport LP did not report an optimal solution."""


class TooLarge(ValidationError):
    pass


class NonUniform(ValidationError):
    pass


class NotOptimal(WassactionError):
    """A plan or direction lacks an optimality certificate."""


class NoConvergence(WassactionError, RuntimeError):
    """An iterative solve stopped before meeting its tolerance."""

    def __init__(self, message, *, grad_norm=None, iterations=None, miss=None):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.iterations = iterations
        self.miss = miss


class HorizonExceeded(ValidationError):
    pass


class BeyondBlowup(ValidationError):
    pass


class DualityDegenerate(WassactionError, RuntimeError):
    pass


class NotSuperlinear(WassactionError, ValueError):
    pass
