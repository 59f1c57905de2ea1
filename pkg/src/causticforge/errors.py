"""Exception taxonomy.

Two families matter to callers: configuration/input problems (bad grids,
malformed files, invalid flags) and numerical failures (degenerate geometry,
non-convergence).  The CLI maps the first family to exit code 1 and the
second to exit code 2.
"""


class CausticForgeError(Exception):
    """Base class for all library errors."""


class ConfigurationError(CausticForgeError):
    """Invalid parameters: grid divisibility, q < 3, bad offsets, bad flags."""


class BoundaryFormatError(ConfigurationError):
    """Malformed or non-conjugate-symmetric boundary file."""


class NumericalError(CausticForgeError):
    """Base class for runtime numerical failures."""


class DegenerateSpeedError(NumericalError):
    """|r'(s)| fell below the minimum-speed threshold."""


class ConvexityError(NumericalError):
    """Curvature or orientation check failed."""


class SingularChordError(NumericalError):
    """Chord endpoints (nearly) coincide, or no reflection point was found."""


class ResolutionError(NumericalError):
    """Spectral tail could not be driven below tolerance at the maximum mode count."""


class ResonantInputError(NumericalError):
    """An operation requiring a non-resonant input received a resonant one.

    Carries the measured sup norm of the resonant part in ``resonant_norm``.
    """

    def __init__(self, message, resonant_norm):
        super().__init__(message)
        self.resonant_norm = float(resonant_norm)


class ResonantDivisorError(NumericalError):
    """A resonant divisor ([F]_q or [p]_q) is too close to zero."""


class JetFitError(NumericalError):
    """Polynomial fit of billiard-map jets exceeded its residual tolerance."""


class NormalFormError(NumericalError):
    """Normal-form construction failed (ill-conditioned source-term fit)."""


class InitializerError(NumericalError):
    """The approximate invariant circle map could not be solved for."""


class StepFailureError(NumericalError):
    """A Newton step could not be completed even after damping."""


class NonConvergenceError(NumericalError):
    """Iteration exhausted its budget.  Carries the best iterate if available."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class EnvelopeError(NumericalError):
    """Chord envelope is degenerate (consecutive chords parallel)."""
