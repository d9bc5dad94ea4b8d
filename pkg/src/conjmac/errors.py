"""Exception types raised across the package."""


class ConjmacError(ValueError):
    """Base class for invalid inputs to conjmac routines."""


class DimensionError(ConjmacError):
    """A profile, slope vector or weight vector does not match the node count."""


class DegenerateTargetError(ConjmacError):
    """A target profile has a zero entry, so the belief slope is undefined."""


class BoundaryPointError(ConjmacError):
    """An operating point sits on the boundary of [0, 1]^K where a formula is undefined."""


class EstimatorUndefinedError(ConjmacError):
    """Idle-gap estimation is impossible (the node transmits in every slot)."""


class HypothesisViolation(ConjmacError):
    """Class slopes below 2: the heterogeneous steady-state is not guaranteed unique."""


class ScenarioError(ConjmacError):
    """A scenario file is malformed or names an unknown key."""
