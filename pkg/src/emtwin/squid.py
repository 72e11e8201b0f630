"""Flux-tunable resonator: Josephson inductance, quarter-wave resonance,
responsivity, flux-axis calibration, and the coupling-rate chain.

The circuit model is a quarter-wave transmission line of bare frequency
``f0_bare`` and characteristic impedance ``z0``, shorted to ground through
the SQUID inductance L_J. The resonance is the root of

    tan(pi f / (2 f0_bare)) = z0 / (2 pi f L_J)

on (0, f0_bare), which reduces to the participation-ratio formula for small
L_J. Note that the data constrain z0 and the critical current only through
their product, so flux-map fits hold z0 fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fitengine
from .errors import DivergentInductance, FitDiverged, InsufficientSpan, NoConvergence
from .units import PHI0, MechanicalMode, zero_point_fluctuation

_MAX_BISECTIONS = 200
_DIVERGENCE_FLOOR = 1e-6  # on I_c,eff relative to 2 i_c


@dataclass(frozen=True)
class SquidParams:
    """Single-junction critical current and junction asymmetry."""

    i_c: float
    asymmetry_d: float = 0.0

    def __post_init__(self):
        if self.i_c <= 0:
            raise ValueError("i_c must be positive")
        if not 0 <= self.asymmetry_d < 1:
            raise ValueError("asymmetry_d must be in [0, 1)")


@dataclass(frozen=True)
class ResonatorGeometry:
    """Quarter-wave frequency at L_J = 0 and line characteristic impedance."""

    f0_bare: float
    z0: float

    def __post_init__(self):
        if self.f0_bare <= 0:
            raise ValueError("f0_bare must be positive")
        if self.z0 <= 0:
            raise ValueError("z0 must be positive")


@dataclass(frozen=True)
class FluxAxis:
    """Affine map from applied field to flux threading the loop."""

    offset: float  # Wb
    area_eff: float  # m^2

    def __post_init__(self):
        if self.area_eff <= 0:
            raise ValueError("area_eff must be positive")

    def phi(self, b_ext):
        """Normalized flux Phi/Phi0 for an applied field in tesla."""
        return (self.offset + self.area_eff * np.asarray(b_ext, dtype=float)) / PHI0


def _ic_eff_factor(phi, d):
    """sqrt(cos^2(pi phi) + d^2 sin^2(pi phi)), the I_c,eff / (2 i_c) ratio."""
    c = np.cos(np.pi * phi)
    s = np.sin(np.pi * phi)
    return np.sqrt(c * c + d * d * s * s)


def josephson_inductance(squid: SquidParams, phi: float) -> float:
    """Flux-dependent SQUID inductance Phi0 / (2 pi I_c,eff) in henry.

    Raises
    ------
    DivergentInductance
        When the effective critical current falls below 1e-6 of its maximum
        (bias within ~3e-7 of a half-integer flux quantum at zero asymmetry).
    """
    s = float(_ic_eff_factor(phi, squid.asymmetry_d))
    if s < _DIVERGENCE_FLOOR:
        raise DivergentInductance(
            f"effective critical current collapsed at phi={phi!r}"
        )
    return PHI0 / (4.0 * np.pi * squid.i_c * s)


def _resonance_roots(geom: ResonatorGeometry, lj: np.ndarray) -> np.ndarray:
    """Vectorized bisection for tan(pi f/(2 f0)) = z0/(2 pi f L_J)."""
    f0, z0 = geom.f0_bare, geom.z0
    lj = np.asarray(lj, dtype=float)
    lo = np.full(lj.shape, f0 * 1e-9)
    hi = np.full(lj.shape, f0 * (1.0 - 1e-13))
    rhs_c = z0 / (2.0 * np.pi * lj)

    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        g = np.tan(np.pi * mid / (2.0 * f0)) - rhs_c / mid
        above = g > 0.0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        width = hi - lo
        if np.all(width <= 4.0 * np.finfo(float).eps * hi):
            return 0.5 * (lo + hi)
    raise NoConvergence("resonance bisection exceeded 200 iterations")


def resonance_frequency(geom: ResonatorGeometry, squid: SquidParams, phi: float) -> float:
    """Resonance frequency in Hz at normalized flux `phi`.

    Monotone non-increasing in L_J; equals f0_bare in the L_J -> 0 limit.
    """
    lj = josephson_inductance(squid, phi)
    return float(_resonance_roots(geom, np.array([lj]))[0])


def flux_sweep(geom: ResonatorGeometry, squid: SquidParams, phis) -> np.ndarray:
    """Resonance frequencies over an array of flux values.

    Points inside the divergence window come back as NaN instead of raising,
    so sweeps across half-integer flux stay usable.
    """
    phis = np.asarray(phis, dtype=float)
    s = _ic_eff_factor(phis, squid.asymmetry_d)
    ok = s >= _DIVERGENCE_FLOOR
    out = np.full(phis.shape, np.nan)
    if ok.any():
        lj = PHI0 / (4.0 * np.pi * squid.i_c * s[ok])
        out[ok] = _resonance_roots(geom, lj)
    return out


def _responsivity_from_f(geom, squid, phis, f):
    """Implicit-differentiation slope df/dphi given converged roots f."""
    d = squid.asymmetry_d
    s = _ic_eff_factor(phis, d)
    lj = PHI0 / (4.0 * np.pi * squid.i_c * s)
    ds_dphi = np.pi * np.sin(2.0 * np.pi * phis) * (d * d - 1.0) / (2.0 * s)
    dlj_dphi = -lj * ds_dphi / s

    x = np.pi * f / (2.0 * geom.f0_bare)
    dg_df = (np.pi / (2.0 * geom.f0_bare)) / np.cos(x) ** 2 + geom.z0 / (
        2.0 * np.pi * f * f * lj
    )
    dg_dlj = geom.z0 / (2.0 * np.pi * f * lj * lj)
    return -(dg_dlj * dlj_dphi) / dg_df


def responsivity(geom: ResonatorGeometry, squid: SquidParams, phi: float) -> float:
    """Slope of the resonance frequency versus flux, in Hz per Phi0.

    Negative on (0, 1/2) for a symmetric SQUID; zero at the sweet spot.
    """
    lj = josephson_inductance(squid, phi)  # domain check
    f = _resonance_roots(geom, np.array([lj]))
    return float(_responsivity_from_f(geom, squid, np.array([float(phi)]), f)[0])


def responsivity_sweep(geom: ResonatorGeometry, squid: SquidParams, phis) -> np.ndarray:
    """Vectorized responsivity; NaN inside the divergence window."""
    phis = np.asarray(phis, dtype=float)
    s = _ic_eff_factor(phis, squid.asymmetry_d)
    ok = s >= _DIVERGENCE_FLOOR
    out = np.full(phis.shape, np.nan)
    if ok.any():
        lj = PHI0 / (4.0 * np.pi * squid.i_c * s[ok])
        f = _resonance_roots(geom, lj)
        out[ok] = _responsivity_from_f(geom, squid, phis[ok], f)
    return out


def coupling_g0(responsivity_hz_per_phi0: float, b_ext: float, mode: MechanicalMode) -> float:
    """Vacuum electromechanical coupling rate g0 in Hz.

    g0 = |df/dPhi| * modeshape * |B| * length * x_zpf / Phi0. Exactly linear
    in both the responsivity and the applied field.
    """
    xzpf = zero_point_fluctuation(mode)
    return (
        abs(responsivity_hz_per_phi0)
        * mode.modeshape_factor
        * abs(b_ext)
        * mode.length
        * xzpf
        / PHI0
    )


@dataclass
class FluxMapFit:
    """Result of calibrating the flux-tuning map."""

    squid: SquidParams
    geometry: ResonatorGeometry
    axis: FluxAxis
    std_errors: dict
    residual_rms_hz: float
    outcome: fitengine.FitOutcome


def _guess_axis(b, f):
    # Assume the field sweep covers roughly half a flux period with the
    # frequency maximum at the sweet spot. Good enough to start the fit;
    # pass an explicit axis_guess when the sweep is narrower.
    b_span = float(np.max(b) - np.min(b))
    if b_span <= 0:
        raise InsufficientSpan("flux map needs a nonzero field span")
    phi_per_tesla = 0.5 / b_span
    b_at_max = float(b[np.argmax(f)])
    return FluxAxis(offset=-b_at_max * phi_per_tesla * PHI0, area_eff=phi_per_tesla * PHI0)


def fit_flux_map(
    data,
    geom_guess: ResonatorGeometry,
    squid_guess: SquidParams,
    axis_guess: FluxAxis | None = None,
) -> FluxMapFit:
    """Least-squares calibration of (i_c, f0_bare, flux axis) from a tuning map.

    Parameters
    ----------
    data : sequence of (b_ext_tesla, f_c_hz) pairs or (n, 2) array.
    geom_guess, squid_guess : starting point. z0 is held fixed at the guess
        value: the resonance condition constrains only the product z0 * i_c,
        so floating both would make the normal equations singular.
    axis_guess : optional; inferred from the data when omitted.

    Raises
    ------
    InsufficientSpan
        Fewer than 10 points, or the calibrated map covers < 0.3 Phi0.
    FitDiverged
        Optimizer stalled away from a credible minimum.
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("data must be (b_ext_tesla, f_c_hz) pairs")
    if arr.shape[0] < 10:
        raise InsufficientSpan("flux map needs at least 10 points")
    b, f_data = arr[:, 0], arr[:, 1]

    axis0 = axis_guess if axis_guess is not None else _guess_axis(b, f_data)
    d_fixed = squid_guess.asymmetry_d
    z0_fixed = geom_guess.z0
    f_max = float(np.max(f_data))

    phi_off0 = axis0.offset / PHI0
    phi_per_t0 = axis0.area_eff / PHI0

    def residual(p):
        i_c, f0, phi_off, phi_per_t = p
        geom = ResonatorGeometry(f0_bare=f0, z0=z0_fixed)
        sq = SquidParams(i_c=i_c, asymmetry_d=d_fixed)
        phis = phi_off + phi_per_t * b
        model = flux_sweep(geom, sq, phis)
        model = np.where(np.isfinite(model), model, 0.0)  # divergence -> huge residual
        return model - f_data

    f0_start = float(np.clip(geom_guess.f0_bare, f_max * 1.001, f_max * 9.0))
    problem = fitengine.FitProblem(
        residual=residual,
        p0=np.array([squid_guess.i_c, f0_start, phi_off0, phi_per_t0]),
        lower=np.array([squid_guess.i_c / 100, f_max * (1 + 1e-6), phi_off0 - 1.0, phi_per_t0 / 10]),
        upper=np.array([squid_guess.i_c * 100, f_max * 10, phi_off0 + 1.0, phi_per_t0 * 10]),
        x_scale=np.array([squid_guess.i_c, geom_guess.f0_bare, 1.0, abs(phi_per_t0)]),
    )
    outcome = fitengine.solve(problem)
    if outcome.termination in ("stalled", "max_iterations"):
        raise FitDiverged(f"flux-map fit terminated by '{outcome.termination}'")

    i_c, f0, phi_off, phi_per_t = outcome.params
    phis = phi_off + phi_per_t * b
    if float(np.max(phis) - np.min(phis)) < 0.3:
        raise InsufficientSpan("calibrated flux span below 0.3 Phi0")

    err = outcome.std_errors()
    return FluxMapFit(
        squid=SquidParams(i_c=i_c, asymmetry_d=d_fixed),
        geometry=ResonatorGeometry(f0_bare=f0, z0=z0_fixed),
        axis=FluxAxis(offset=phi_off * PHI0, area_eff=phi_per_t * PHI0),
        std_errors={
            "i_c": err[0],
            "f0_bare": err[1],
            "offset": err[2] * PHI0,
            "area_eff": err[3] * PHI0,
        },
        residual_rms_hz=outcome.residual_rms,
        outcome=outcome,
    )
