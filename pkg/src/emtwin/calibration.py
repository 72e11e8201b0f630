"""Inverse analysis: peak fitting, coupling-rate extraction via the
calibration tone, photon number, back-action damping, and force sensitivity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fitengine
from .errors import (
    FitDiverged,
    InstabilityThreshold,
    MissingCalTone,
    PeakTooNarrow,
    ToneOutOfRange,
    UnitMismatch,
)
from .lineshape import LineshapeParams
from .spectra import CalibrationTone, Spectrum, lorentzian
from .units import HBAR, MechanicalMode


@dataclass(frozen=True)
class ProbeTone:
    """Microwave probe: absolute frequency, power, and detuning from the cavity."""

    f_p: float
    power: float
    detuning: float

    def __post_init__(self):
        if self.f_p <= 0:
            raise ValueError("f_p must be positive")
        if self.power < 0:
            raise ValueError("power must be non-negative")


@dataclass(frozen=True)
class GZeroResult:
    """Extracted vacuum coupling rate and the mechanical fit behind it."""

    g0: float
    std_err: float
    gamma_m_fit: float
    f_m_fit: float

    def __post_init__(self):
        if self.g0 < 0 or self.std_err < 0:
            raise ValueError("g0 and std_err must be non-negative")


@dataclass
class PeakFit:
    """Floor + area * Lorentzian fit of a single PSD peak."""

    f0: float
    fwhm: float
    height: float  # peak value above the floor
    floor: float
    area: float
    std_errors: dict
    outcome: fitengine.FitOutcome

    def model(self, f):
        return self.floor + self.area * lorentzian(f, self.f0, self.fwhm)


def _prominent_peaks(f, y, floor, height, group_width):
    """Indices of well-separated prominent local maxima (crude smoothing)."""
    kernel = np.ones(5) / 5.0
    smooth = np.convolve(y, kernel, mode="same")
    sigma_n = 1.4826 * float(np.median(np.abs(y - np.median(y))))
    thresh = floor + max(0.5 * height, 5.0 * sigma_n)
    idx = [
        i
        for i in range(2, len(y) - 2)
        if smooth[i] > thresh and smooth[i] >= smooth[i - 1] and smooth[i] >= smooth[i + 1]
    ]
    groups = []
    for i in idx:
        if groups and f[i] - f[groups[-1][-1]] < group_width:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [g[int(np.argmax(y[g]))] for g in groups]


def fit_lorentzian_peak(spec: Spectrum, window=None, exclude=()) -> PeakFit:
    """Fit floor + A * L(f; f0, fwhm) to a windowed PSD.

    Parameters
    ----------
    spec : Spectrum
        PSD containing a single peak at least 3 bins wide.
    window : (f_lo, f_hi) or None
        Sub-range to fit; full axis when None.
    exclude : iterable of float
        Frequencies whose nearest bins are masked out (e.g. a cal tone).

    Raises
    ------
    PeakTooNarrow
        Fitted width below 3 bin spacings.
    FitDiverged
        Multiple prominent peaks in the window, or optimizer stalled.
    """
    f = spec.f
    y = spec.values
    mask = np.ones(f.size, dtype=bool)
    if window is not None:
        mask &= (f >= window[0]) & (f <= window[1])
    for fx in exclude:
        try:
            mask[spec.bin_index(fx)] = False
        except ToneOutOfRange:
            pass
    f, y = f[mask], y[mask]
    if f.size < 8:
        raise ValueError("window too small to fit a peak")
    spacing = float(np.min(np.diff(f)))

    floor0 = float(np.percentile(y, 25))
    i_pk = int(np.argmax(y))
    if float(y[i_pk] - floor0) <= 1e-12 * max(float(y[i_pk]), 1e-300):
        # Structureless window: report a zero-area peak instead of fitting.
        return PeakFit(
            f0=float(0.5 * (f[0] + f[-1])),
            fwhm=3.0 * spacing,
            height=0.0,
            floor=float(np.mean(y)),
            area=0.0,
            std_errors={"f0": 0.0, "fwhm": 0.0, "area": 0.0, "floor": 0.0},
            outcome=fitengine.FitOutcome(
                params=np.array([0.5 * (f[0] + f[-1]), 3.0 * spacing, 0.0, float(np.mean(y))]),
                covariance=np.zeros((4, 4)),
                residual_rms=float(np.std(y)),
                iterations=0,
                termination="flat_window",
            ),
        )
    height0 = float(y[i_pk] - floor0)
    above = y > floor0 + height0 / 2.0
    fwhm0 = max(float(np.sum(above)) * spacing, 3.0 * spacing)
    peaks = _prominent_peaks(f, y, floor0, height0, group_width=5.0 * fwhm0)
    if len(peaks) > 1:
        raise FitDiverged(f"{len(peaks)} prominent peaks in the fit window")

    area0 = height0 * np.pi * fwhm0 / 2.0
    f00 = float(np.clip(f[i_pk], f[0] + spacing, f[-1] - spacing))

    def unweighted(p):
        # Scaled to O(1) so the absolute solver tolerances behave the same
        # for PSDs in any unit system.
        f0, fwhm, area, floor = p
        return (floor + area * lorentzian(f, f0, fwhm) - y) / height0

    floor_hi = max(float(y.max()) * 1.25, 1e-250)
    lower = np.array([f[0], spacing * 0.1, 0.0, 0.0])
    upper = np.array([f[-1], (f[-1] - f[0]) * 10, area0 * 1e6, floor_hi])
    x_scale = np.array([max(f00, spacing), fwhm0, area0, max(floor0, height0 * 1e-6)])
    first = fitengine.solve(
        fitengine.FitProblem(
            residual=unweighted,
            p0=np.array([f00, fwhm0, area0, np.clip(floor0, 1e-300, 0.8 * floor_hi)]),
            lower=lower,
            upper=upper,
            x_scale=x_scale,
        )
    )
    if first.termination in ("stalled", "max_iterations"):
        raise FitDiverged(f"peak fit terminated by '{first.termination}'")

    # Second pass weighted by the first-pass model: averaged-periodogram
    # noise has sigma_i proportional to the bin value, so this both
    # sharpens the estimate and calibrates the covariance.
    model1 = first.params[3] + first.params[2] * lorentzian(f, first.params[0], first.params[1])
    weights = 1.0 / np.maximum(model1, 1e-9 * float(np.max(model1)) + 1e-300)

    def weighted(p):
        f0, fwhm, area, floor = p
        return (floor + area * lorentzian(f, f0, fwhm) - y) * weights

    shrink = 1e-9 * (upper - lower)
    outcome = fitengine.solve(
        fitengine.FitProblem(
            residual=weighted,
            p0=np.clip(first.params, lower + shrink, upper - shrink),
            lower=lower,
            upper=upper,
            x_scale=x_scale,
        )
    )
    if outcome.termination in ("stalled", "max_iterations"):
        raise FitDiverged(f"peak fit terminated by '{outcome.termination}'")

    f0, fwhm, area, floor = outcome.params
    if fwhm < 3.0 * spacing:
        raise PeakTooNarrow(f"fitted width {fwhm:.3g} Hz < 3 bins ({3*spacing:.3g} Hz)")
    err = outcome.std_errors()
    return PeakFit(
        f0=f0,
        fwhm=fwhm,
        height=2.0 * area / (np.pi * fwhm),
        floor=floor,
        area=area,
        std_errors={"f0": err[0], "fwhm": err[1], "area": err[2], "floor": err[3]},
        outcome=outcome,
    )


def extract_g0(
    spec: Spectrum,
    tone: CalibrationTone,
    n_th: float,
    transfer_ratio_y: float = 1.0,
) -> GZeroResult:
    """Vacuum coupling rate from the mechanical peak / calibration tone ratio.

    Implements the exact inverse of the forward voltage-PSD model:

        g0^2 = (phi0^2 f_mod^2 / (4 n_th Y)) * pi * gamma_m * S_m
               / (2 * S_cal * enbw)

    with S_m the floor-subtracted mechanical peak height and S_cal the
    floor- and tail-subtracted calibration bin. Fit uncertainties and the
    single-bin statistics of the calibration tone propagate to `std_err`.

    Raises
    ------
    MissingCalTone
        Tone outside the spectrum, or its bin not above the background.
    """
    if n_th <= 0:
        raise ValueError("n_th must be positive")
    try:
        cal_idx = spec.bin_index(tone.f_mod)
    except ToneOutOfRange as exc:
        raise MissingCalTone(str(exc)) from exc

    peak = fit_lorentzian_peak(spec, exclude=(tone.f_mod,))
    cal_raw = float(spec.values[cal_idx])
    mech_at_cal = peak.area * lorentzian(spec.f[cal_idx], peak.f0, peak.fwhm)
    s_cal = cal_raw - peak.floor - mech_at_cal

    # The tone occupies a single bin; demand that it stands out from the
    # local background scatter of the neighbouring bins.
    neigh = [cal_idx + k for k in (-6, -5, -4, -3, -2, 2, 3, 4, 5, 6)
             if 0 <= cal_idx + k < spec.f.size]
    resid_n = spec.values[neigh] - peak.floor - peak.area * lorentzian(
        spec.f[neigh], peak.f0, peak.fwhm
    )
    scatter = 1.4826 * float(np.median(np.abs(resid_n))) + 1e-9 * abs(cal_raw)
    if s_cal <= 5.0 * scatter:
        raise MissingCalTone("calibration bin does not rise above the background")

    c0 = tone.phi0 ** 2 * tone.f_mod ** 2 / (4.0 * n_th * transfer_ratio_y)
    g0_sq = c0 * np.pi * peak.fwhm * peak.height / (2.0 * s_cal * spec.enbw)

    # gamma * height = 2 * area / pi, so g0^2 depends on the fit only
    # through the area; propagate area and single-bin tone statistics.
    var_area = peak.std_errors["area"] ** 2
    rel_var = var_area / peak.area ** 2 if peak.area > 0 else 0.0
    rel_var += (cal_raw / np.sqrt(spec.n_avg) / s_cal) ** 2
    sigma_g0_sq = abs(g0_sq) * np.sqrt(rel_var)

    if g0_sq > 0:
        g0 = float(np.sqrt(g0_sq))
        std_err = sigma_g0_sq / (2.0 * g0)
    else:
        g0 = 0.0
        std_err = float(np.sqrt(sigma_g0_sq)) / 2.0 if sigma_g0_sq > 0 else 0.0
    return GZeroResult(g0=g0, std_err=std_err, gamma_m_fit=peak.fwhm, f_m_fit=peak.f0)


def photon_number(tone: ProbeTone, line: LineshapeParams) -> float:
    """Steady-state intracavity photon number of a detuned drive.

    n = (P / hbar omega_p) * kappa_ext / ((kappa/2)^2 + Delta^2), with
    angular rates.
    """
    omega_p = 2.0 * np.pi * tone.f_p
    ke = 2.0 * np.pi * line.kappa_ext
    k = 2.0 * np.pi * line.kappa_total
    d = 2.0 * np.pi * tone.detuning
    return tone.power / (HBAR * omega_p) * ke / ((k / 2.0) ** 2 + d * d)


def gamma_em(
    g0: float,
    n_cav: float,
    line: LineshapeParams,
    f_m: float,
    detuning: float,
) -> float:
    """Electromechanically induced damping rate in Hz (signed).

    Negative (anti-damping) for a blue-detuned drive at detuning = +f_m;
    odd in the detuning; approaches -4 g0^2 n / kappa deep in the
    resolved-sideband regime.
    """
    g = 2.0 * np.pi * g0
    k = 2.0 * np.pi * line.kappa_total
    d = 2.0 * np.pi * detuning
    om = 2.0 * np.pi * f_m
    lobe = lambda x: k / ((k / 2.0) ** 2 + x * x)
    return g * g * n_cav * (lobe(d + om) - lobe(d - om)) / (2.0 * np.pi)


def effective_occupation(n_th: float, gamma_m: float, gamma_em_hz: float) -> float:
    """Phonon occupation with back-action: n_th * gamma_m / (gamma_m + gamma_em).

    Raises InstabilityThreshold at or beyond the parametric threshold
    gamma_m + gamma_em <= 0.
    """
    total = gamma_m + gamma_em_hz
    if total <= 0:
        raise InstabilityThreshold(
            f"gamma_m + gamma_em = {total:.3g} Hz <= 0: no stable steady state"
        )
    return n_th * gamma_m / total


def susceptibility(f, mode: MechanicalMode):
    """Mechanical susceptibility [m_eff (Omega_m^2 - Omega^2 - i Gamma_m Omega)]^-1.

    Complex, in m/N; |chi(f_m)| = 1/(m Gamma_m Omega_m) on resonance and
    chi(0) is the static compliance 1/(m Omega_m^2).
    """
    om = 2.0 * np.pi * np.asarray(f, dtype=float)
    om_m = 2.0 * np.pi * mode.f_m
    gm = 2.0 * np.pi * mode.gamma_m
    denom = mode.m_eff * (om_m * om_m - om * om - 1j * gm * om)
    out = 1.0 / denom
    return out if out.ndim else complex(out)


def force_sensitivity(sxx: Spectrum, mode: MechanicalMode) -> Spectrum:
    """Detected force PSD S_FF = 2 S_xx / |chi|^2, in N^2/Hz."""
    if sxx.unit != "m^2/Hz":
        raise UnitMismatch(f"expected m^2/Hz spectrum, got {sxx.unit!r}")
    chi = susceptibility(sxx.f, mode)
    values = 2.0 * sxx.values / np.abs(chi) ** 2
    return sxx.with_values(values, unit="N^2/Hz")
