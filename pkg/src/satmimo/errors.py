"""Exception types raised by the satmimo package."""


class SatmimoError(Exception):
    """Base class for all package-specific errors."""


class SelectionInfeasible(SatmimoError):
    """No service region with enough visible satellites could be sampled."""


class DegenerateLink(SatmimoError):
    """A link statistic or solver quantity is degenerate (zero or negative)."""


class SingularSystem(SatmimoError):
    """A linear system stayed singular/ill-conditioned even after jitter."""


class BracketFailure(SatmimoError):
    """The dual-variable search could not bracket the power constraint."""


class ShapeMismatch(SatmimoError, ValueError):
    """An array argument does not have the contracted shape."""


class ScenarioFormatError(SatmimoError, ValueError):
    """A scenario file is malformed or violates its invariants."""


class WeightFormatError(SatmimoError, ValueError):
    """A weight container is malformed or inconsistent with its dims."""
