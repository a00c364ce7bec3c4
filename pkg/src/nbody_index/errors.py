"""Exception hierarchy shared by every module of the package."""


class NBodyIndexError(Exception):
    """Base class for all errors raised by :mod:`nbody_index`."""


class CollisionError(NBodyIndexError):
    """A configuration lies on (or numerically at) the collision set."""


class NotNormalizedError(NBodyIndexError):
    """A configuration was expected on the inertia ellipsoid but is not."""


class ChartDomainError(NBodyIndexError):
    """Chart coordinates fall outside the usable chart domain."""


class NoConvergenceError(NBodyIndexError):
    """The central-configuration solver did not reach its tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class NotCentralError(NBodyIndexError):
    """An operation that needs a central configuration got something else."""


class IntegratorError(NBodyIndexError):
    """An ODE integration failed (step-size collapse, non-finite state)."""


class UnresolvedCrossingError(NBodyIndexError):
    """Two crossing instants could not be separated numerically."""


class DegenerateCrossingError(NBodyIndexError):
    """A crossing form has a nontrivial kernel, so the crossing is not regular."""

    def __init__(self, message, event=None):
        super().__init__(message)
        self.event = event


class MeshTooCoarseError(NBodyIndexError):
    """The Galerkin negative-eigenvalue count changed under mesh refinement."""
