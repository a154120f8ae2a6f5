"""Exception types raised across the package.

Every error the CLI can report derives from :class:`PolynetError`, so callers
can catch a single type and still branch on the specific subclass.
"""


class PolynetError(Exception):
    """Base class for all package errors."""


class ValidationError(PolynetError, ValueError):
    """Input violates a documented precondition."""


class DuplicateFaceError(ValidationError):
    """Two faces of a polytope describe the same half-space."""


class UnboundedPolytopeError(PolynetError):
    """No nonnegative balanced face weighting exists (the region is unbounded)."""


class EmptyPolytopeError(PolynetError):
    """The polytope has empty interior."""


class EpsilonTooLargeError(PolynetError):
    """An epsilon-neighborhood of a polytope reaches a point of the opposite class."""


class AffineDependenceError(ValidationError):
    """Simplex vertices are affinely dependent."""


class BudgetExceededError(PolynetError):
    """A construction would exceed the configured size budget."""


class NumericError(PolynetError, FloatingPointError):
    """A forward or backward pass produced NaN or infinity."""


class SignFlipError(PolynetError):
    """An output weight of a sign-constrained network changed sign during training."""


class UnsettledSubnetError(PolynetError):
    """Some subnetwork output is neither 0 nor lambda on the data.

    ``offenders`` lists ``(subnet_index, point_index, value)`` triples.
    """

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


class AssumptionError(PolynetError):
    """Guided-descent preconditions are not met by the current state."""


class DataFormatError(PolynetError):
    """A dataset file is malformed."""
