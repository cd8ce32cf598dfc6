"""Polytopic approximation of sampled-data viability kernels for LTI systems."""

from .discretization import LtiSystem, SampledDataProblem
from .errors import (
    BoundBlowup,
    ConfigError,
    DegenerateInput,
    EmptyErosion,
    FacetAborted,
    InfeasibleAnchor,
    LpNumericalFailure,
    OrderTooLow,
    OriginOutside,
    Unbounded,
    ViabilityError,
)
from .geometry import Polytope, Ray
from .kernel import (
    OverApproximation,
    UnderApproximation,
    ViabilitySolver,
    combined_guided,
    over_approx,
    polytopic_approx,
    scale_and_bound,
)
from .sampling import SamplerState

__all__ = [
    "BoundBlowup", "ConfigError", "DegenerateInput", "EmptyErosion", "FacetAborted",
    "InfeasibleAnchor", "LpNumericalFailure", "LtiSystem", "OrderTooLow", "OriginOutside",
    "OverApproximation", "Polytope", "Ray", "SampledDataProblem", "SamplerState",
    "Unbounded", "UnderApproximation", "ViabilityError", "ViabilitySolver",
    "combined_guided", "over_approx", "polytopic_approx", "scale_and_bound",
]
