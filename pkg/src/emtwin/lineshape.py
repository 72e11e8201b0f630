"""Static notch transmission model and loss-rate extraction from |S21|^2.

The magnitude-only model cannot tell kappa_ext from kappa_int: swapping them
leaves the lineshape unchanged. Fits therefore return both roots and a flag;
the default branch keeps the undercoupled solution (kappa_ext < kappa/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fitengine
from .errors import FitDiverged, InsufficientSpan, InputDataError


@dataclass(frozen=True)
class LineshapeParams:
    """Notch resonance: center frequency and external/internal loss rates (Hz)."""

    f_c: float
    kappa_ext: float
    kappa_int: float

    def __post_init__(self):
        if self.f_c <= 0:
            raise ValueError("f_c must be positive")
        if self.kappa_ext <= 0:
            raise ValueError("kappa_ext must be positive")
        if self.kappa_int < 0:
            raise ValueError("kappa_int must be non-negative")

    @property
    def kappa_total(self) -> float:
        return self.kappa_ext + self.kappa_int


def s21_squared(delta, p: LineshapeParams):
    """Notch transmission |S21|^2 at detuning `delta` (Hz) from resonance.

    1 - kappa_ext * kappa_int / ((kappa/2)^2 + Delta^2), rates angular
    internally; dimensionless in [0, 1].
    """
    delta = np.asarray(delta, dtype=float)
    ke = 2.0 * np.pi * p.kappa_ext
    ki = 2.0 * np.pi * p.kappa_int
    k = ke + ki
    d = 2.0 * np.pi * delta
    out = 1.0 - ke * ki / ((k / 2.0) ** 2 + d * d)
    return np.clip(out, 0.0, 1.0) if out.ndim else float(np.clip(out, 0.0, 1.0))


def depth(p: LineshapeParams) -> float:
    """On-resonance dip depth 4 (kappa_ext/kappa)(1 - kappa_ext/kappa)."""
    r = p.kappa_ext / p.kappa_total
    return 4.0 * r * (1.0 - r)


@dataclass
class FitResonanceResult:
    """Both coupling branches of a magnitude-only notch fit."""

    params: LineshapeParams
    params_alt: LineshapeParams
    std_errors: dict
    background: float
    residual_rms: float
    ambiguous: bool
    outcome: fitengine.FitOutcome

    def sideband_resolved(self, f_m: float) -> bool:
        """Whether a mechanical frequency exceeds the total linewidth."""
        return bool(f_m > self.params.kappa_total)


def fit_resonance(
    trace, guess: LineshapeParams, branch: str = "undercoupled"
) -> FitResonanceResult:
    """Fit |S21|^2 data with the notch model plus a constant background scale.

    Parameters
    ----------
    trace : Spectrum with unit 'dimensionless' (|S21|^2 versus frequency).
    guess : starting LineshapeParams.
    branch : 'undercoupled' keeps kappa_ext < kappa/2 as the primary root,
        'overcoupled' the mirror. Both are always returned.

    Raises
    ------
    InsufficientSpan
        Trace spans fewer than 5 guessed linewidths.
    InputDataError
        Values outside [0, 1.1].
    FitDiverged
        Optimizer stalled.
    """
    if branch not in ("undercoupled", "overcoupled"):
        raise ValueError("branch must be 'undercoupled' or 'overcoupled'")
    f = np.asarray(trace.f, dtype=float)
    y = np.asarray(trace.values, dtype=float)
    if f[-1] - f[0] < 5.0 * guess.kappa_total:
        raise InsufficientSpan("trace must span at least 5 linewidths")
    if np.any(y < 0.0) or np.any(y > 1.1):
        raise InputDataError("|S21|^2 values must lie in [0, 1.1]")

    def residual(p):
        f_c, ke, ki, bg = p
        model = bg * s21_squared(f - f_c, LineshapeParams(f_c, ke, ki))
        return model - y

    kappa0 = guess.kappa_total
    f_c0 = float(np.clip(guess.f_c, f[0] + (f[1] - f[0]), f[-1] - (f[-1] - f[-2])))
    ki0 = max(guess.kappa_int, kappa0 * 1e-4)
    problem = fitengine.FitProblem(
        residual=residual,
        p0=np.array([f_c0, guess.kappa_ext, ki0, 1.0]),
        lower=np.array([f[0], kappa0 * 1e-5, kappa0 * 1e-5, 0.1]),
        upper=np.array([f[-1], kappa0 * 1e3, kappa0 * 1e3, 10.0]),
        x_scale=np.array([guess.f_c, kappa0, kappa0, 1.0]),
    )
    outcome = fitengine.solve(problem)
    if outcome.termination in ("stalled", "max_iterations"):
        raise FitDiverged(f"resonance fit terminated by '{outcome.termination}'")

    f_c, ke, ki, bg = outcome.params
    err = outcome.std_errors()
    primary = LineshapeParams(f_c, ke, ki)
    mirrored = LineshapeParams(f_c, ki, ke) if ki > 0 else primary
    under_first = primary.kappa_ext <= primary.kappa_total / 2.0
    want_under = branch == "undercoupled"
    if under_first != want_under and mirrored is not primary:
        primary, mirrored = mirrored, primary
        err = np.array([err[0], err[2], err[1], err[3]])

    ambiguous = bool(abs(primary.kappa_ext - primary.kappa_int) > (err[1] + err[2]))
    return FitResonanceResult(
        params=primary,
        params_alt=mirrored,
        std_errors={
            "f_c": err[0],
            "kappa_ext": err[1],
            "kappa_int": err[2],
            "background": err[3],
        },
        background=bg,
        residual_rms=outcome.residual_rms,
        ambiguous=ambiguous,
        outcome=outcome,
    )
