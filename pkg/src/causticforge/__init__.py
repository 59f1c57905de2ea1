"""causticforge: construct convex billiard boundaries with rational caustics.

Given a strictly convex closed curve and an integer q >= 3, the forge
pipeline produces a nearby boundary whose billiard has a caustic of rotation
number 1/q, then verifies the result independently by shooting orbits.
"""

__version__ = "0.1.0"

from .errors import (
    BoundaryFormatError,
    CausticForgeError,
    ConfigurationError,
    ConvexityError,
    DegenerateSpeedError,
    EnvelopeError,
    InitializerError,
    JetFitError,
    NonConvergenceError,
    NormalFormError,
    NumericalError,
    ResolutionError,
    ResonantDivisorError,
    ResonantInputError,
    SingularChordError,
    StepFailureError,
)
from .gridfn import (
    CircleMap,
    GridFn,
    antiderivative_from_zero,
    decay_width_estimate,
    difference,
    invert_difference,
    nonresonant_part,
    resonant_part,
    shift,
    spectral_derivative,
)
from .curves import (
    CurvatureProfile,
    FourierCurve,
    compose_with_map,
    curvature_of,
    curve_from_curvature,
    curvature_profile_of,
    geometric_distance,
    perimeter,
    radial_scale,
    reparametrize_arclength,
    smooth_profile,
)

__all__ = [name for name in dir() if not name.startswith("_")]
