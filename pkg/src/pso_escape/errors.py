"""Exception hierarchy shared by every module."""


class PsoEscapeError(Exception):
    """Base class for library errors."""


class ValidationError(PsoEscapeError, ValueError):
    """A parameter or state violates its domain invariants."""


class DegenerateError(PsoEscapeError, ValueError):
    """The configuration collapses a quantity to zero (typically pb == gb)."""


class NotApplicableError(PsoEscapeError, ValueError):
    """The requested bound or construction is only proven for omega == 1."""


class PreconditionError(PsoEscapeError, ValueError):
    """A chain builder received an origin outside its required state set."""


class DegenerateDistributionError(PsoEscapeError, ValueError):
    """The one-step velocity law is a point mass and has no density."""
