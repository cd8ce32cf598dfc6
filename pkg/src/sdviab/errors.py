"""Exception hierarchy shared by all modules."""


class ViabilityError(Exception):
    """Base class for errors raised by sdviab."""


class ConfigError(ViabilityError, ValueError):
    """Invalid problem definition or configuration."""


class OrderTooLow(ViabilityError):
    """The Taylor truncation order is too low for the given ``||A|| * delta``.

    Raised when ``||A||_inf * delta / (zeta + 2) >= 1``; raise ``zeta`` or
    shrink ``delta``.
    """


class BoundBlowup(ViabilityError):
    """Discretization error coefficients exceeded the configured cap."""


class EmptyErosion(ViabilityError):
    """An eroded constraint set is empty."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class OriginOutside(ViabilityError):
    """A ray origin violates a facet of the set it should start inside."""


class Unbounded(ViabilityError):
    """A set or a linear objective over it is unbounded."""


class InfeasibleAnchor(ViabilityError):
    """The anchor point of a bisection or approximation is not feasible."""


class LpNumericalFailure(ViabilityError):
    """The LP solver returned neither a solution nor a clean infeasibility."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class FacetAborted(ViabilityError):
    """An over-approximation facet could not be certified and was dropped."""


class DegenerateInput(ViabilityError, ValueError):
    """Input geometry is rank deficient or otherwise degenerate."""
