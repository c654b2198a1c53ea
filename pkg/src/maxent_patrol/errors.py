"""Exception hierarchy shared by every module."""


class PatrolError(Exception):
    """Base class for all package errors."""


class DisconnectedLayer(PatrolError, ValueError):
    pass


class InfeasibleK(PatrolError, ValueError):
    pass


class TooLarge(PatrolError):
    pass


class NoFeasiblePath(PatrolError):
    pass


class NotAMatching(PatrolError, ValueError):
    pass


class NotImplementable(PatrolError):
    """Marginal vector appears to lie outside the convex hull of pure strategies."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class OracleFailure(PatrolError):
    pass


class Infeasible(PatrolError):
    pass


class Unbounded(PatrolError):
    pass


class NotInPolytope(PatrolError, ValueError):
    pass


class NumericalStall(PatrolError):
    pass


class NonIntegralVertex(PatrolError):
    pass


class UnconditionableStrategy(PatrolError):
    pass
