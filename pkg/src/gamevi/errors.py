"""Exception types shared across the package."""


class GameViError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(GameViError, ValueError):
    """Block or operand shapes are inconsistent."""


class Infeasible(GameViError, RuntimeError):
    """The constraint polyhedron was certified empty.

    Attributes
    ----------
    slack : float or None
        Maximal achievable constraint slack (negative when infeasible).
    """

    def __init__(self, message, slack=None):
        super().__init__(message)
        self.slack = slack


class InvalidSplitting(GameViError, ValueError):
    """A matrix splitting violates the convergence conditions.

    Carries ``mu``, the smallest eigenvalue of the symmetric part of the
    matrix being split, when available.
    """

    def __init__(self, message, mu=None):
        super().__init__(message)
        self.mu = mu


class InvalidConfig(GameViError, ValueError):
    """A solver configuration violates its documented contract."""


class NotStronglyMonotone(GameViError, ValueError):
    """Algorithm requires mu > 0 but the operator is not strongly monotone."""


class NoConvergence(GameViError, RuntimeError):
    """An iterative equation solver failed to reach its tolerance."""


class SingularA(GameViError, ValueError):
    """The dynamics matrix must be invertible for this diagnostic."""


class SpecError(GameViError, ValueError):
    """A scenario specification is internally inconsistent."""
