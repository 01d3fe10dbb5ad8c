"""Exception types shared across the toolkit."""


class InvalidSpec(ValueError):
    """A grid, boundary or field specification violates its invariants."""


class ShapeError(ValueError):
    """Operands live on different grids or have incompatible dimensions."""


class UnsupportedDimension(ValueError):
    """The requested construction is only defined in other dimensions."""


class NotApplicable(ValueError):
    """A functional inequality degenerates for this configuration."""


class ConeViolation(ValueError):
    """The eigenvalue lies outside the cone where the identity is defined."""


class SolverFailure(RuntimeError):
    """An iterative or direct solve did not reach the requested accuracy.

    The achieved relative residual is kept on ``residual`` (``inf`` when the
    factorization itself broke down).
    """

    def __init__(self, message, residual=float("inf")):
        super().__init__(message)
        self.residual = residual
