"""Exception hierarchy shared by all modules."""


class PhError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PhError, ValueError):
    """A position left the admissible open set of the model."""


class ShapeError(PhError, ValueError):
    """A matrix or vector has the wrong shape."""


class RankError(PhError):
    """A numerical rank differs from the rank required by a hypothesis."""


class ConstraintError(PhError):
    """A point that should satisfy the constraints does not."""


class NoConvergence(PhError):
    """Newton or Gauss-Newton iteration did not reach its tolerance."""


class SingularSystem(PhError):
    """The saddle-point matrix of a multiplier solve is numerically singular."""


class ParamError(PhError, ValueError):
    """Invalid model parameter (unknown key or non-positive value)."""


class PortError(PhError, ValueError):
    """Invalid port index in a coupling specification."""
