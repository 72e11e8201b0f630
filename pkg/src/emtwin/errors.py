"""Exception types shared across the toolkit.

The three intermediate bases map onto the CLI exit codes: bad input data
exits with 2, fit failures with 3, and model-domain violations with 4.
"""


class EmtwinError(Exception):
    """Base class for all toolkit errors."""


class InputDataError(EmtwinError):
    """Input data is malformed, missing, or insufficient for the request."""


class FitError(EmtwinError):
    """A least-squares fit could not produce a usable result."""


class ModelDomainError(EmtwinError):
    """A model was evaluated outside its physical domain of validity."""


class DivergentInductance(ModelDomainError):
    """SQUID bias too close to a half-integer flux quantum; the effective
    critical current has collapsed and the inductance model diverges."""


class NoConvergence(FitError):
    """Bracketed root search exceeded its iteration cap."""


class FitDiverged(FitError):
    """The optimizer terminated without a credible minimum."""


class NonFiniteResidual(FitError):
    """Residual function returned NaN or infinity at the starting point."""


class SingularNormalEquations(FitError):
    """The Jacobian is rank deficient; the offending directions are reported."""

    def __init__(self, message: str, null_directions=()):
        super().__init__(message)
        self.null_directions = tuple(null_directions)


class InsufficientSpan(InputDataError):
    """Data does not cover enough of the independent axis to constrain a fit."""


class PeakTooNarrow(FitError):
    """Fitted peak is narrower than the sampling grid can support."""


class MissingCalTone(InputDataError):
    """Expected calibration tone is absent from the spectrum."""


class ToneOutOfRange(InputDataError):
    """Calibration tone frequency falls outside the spectrum axis."""


class InstabilityThreshold(ModelDomainError):
    """Anti-damping exceeds the intrinsic linewidth; no stable steady state."""


class NonConvergedSum(ModelDomainError):
    """Sideband ladder truncation violates the Bessel sum rule."""


class BelowSplittingThreshold(FitError):
    """Modulation index too small for a conditioned amplitude fit."""

    def __init__(self, message: str, beta: float = 0.0, beta_err: float = 0.0):
        super().__init__(message)
        self.beta = beta
        self.beta_err = beta_err


class UnitMismatch(InputDataError):
    """Spectrum carries a different unit than the operation requires."""
