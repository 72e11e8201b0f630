"""Forward models of the measured power spectral densities.

Thermal displacement, resonator frequency noise, the phase-modulation
calibration tone, the detection chain, and reproducible synthetic noise.
All PSDs are one-sided, per ordinary frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ToneOutOfRange, InputDataError
from .units import MechanicalMode, ThermalState, zero_point_fluctuation

PSD_UNITS = ("V^2/Hz", "m^2/Hz", "Hz^2/Hz", "N^2/Hz")
VALID_UNITS = PSD_UNITS + ("dimensionless",)


@dataclass
class Spectrum:
    """A sampled one-sided PSD or |S21|^2 trace.

    Parameters
    ----------
    f : array
        Strictly increasing frequency axis in Hz.
    values : array
        Per-bin values in the unit named by `unit`.
    unit : str
        One of 'V^2/Hz', 'm^2/Hz', 'Hz^2/Hz', 'N^2/Hz', 'dimensionless'.
    enbw : float
        Equivalent noise bandwidth per bin, >= the bin spacing.
    n_avg : int
        Number of averaged periodograms behind each bin.
    """

    f: np.ndarray
    values: np.ndarray
    unit: str
    enbw: float
    n_avg: int = 1

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.f.ndim != 1 or self.f.size < 2:
            raise ValueError("frequency axis must be 1-D with at least 2 points")
        if self.values.shape != self.f.shape:
            raise ValueError("values must match the frequency axis")
        if np.any(np.diff(self.f) <= 0):
            raise ValueError("frequency axis must be strictly increasing")
        if self.unit not in VALID_UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")
        if self.unit in PSD_UNITS and np.any(self.values < 0):
            raise ValueError("PSD values must be non-negative")
        spacing = float(np.min(np.diff(self.f)))
        if self.enbw < spacing * (1.0 - 1e-9):
            raise ValueError("enbw must be at least the bin spacing")
        if self.n_avg < 1:
            raise ValueError("n_avg must be a positive integer")

    def bin_index(self, f0: float) -> int:
        """Index of the bin containing `f0` (nearest grid point).

        Raises ToneOutOfRange if f0 lies outside the axis.
        """
        if f0 < self.f[0] or f0 > self.f[-1]:
            raise ToneOutOfRange(f"{f0} Hz outside [{self.f[0]}, {self.f[-1]}] Hz")
        return int(np.argmin(np.abs(self.f - f0)))

    def with_values(self, values, unit=None) -> "Spectrum":
        return replace(self, values=np.asarray(values, dtype=float),
                       unit=self.unit if unit is None else unit)


@dataclass(frozen=True)
class CalibrationTone:
    """Phase-modulation tone: absolute frequency and modulation depth."""

    f_mod: float
    phi0: float

    def __post_init__(self):
        if self.f_mod <= 0:
            raise ValueError("f_mod must be positive")
        if not 0 <= self.phi0 < 0.1:
            raise ValueError("phi0 must be small (< 0.1 rad)")


@dataclass(frozen=True)
class DetectionChain:
    """Collapsed detection chain: gain, imprecision floor, transfer ratio.

    `gain` converts frequency-noise PSD (Hz^2/Hz) to voltage PSD (V^2/Hz);
    `s_imp` is the flat imprecision floor in V^2/Hz; `transfer_ratio_y`
    rescales the mechanical transfer relative to the calibration tone.
    """

    gain: float
    s_imp: float
    transfer_ratio_y: float = 1.0

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.s_imp < 0:
            raise ValueError("s_imp must be non-negative")
        if self.transfer_ratio_y <= 0:
            raise ValueError("transfer_ratio_y must be positive")


def lorentzian(f, f0: float, fwhm: float):
    """Unit-area Lorentzian (fwhm/2pi) / ((f - f0)^2 + (fwhm/2)^2), in 1/Hz."""
    if fwhm <= 0:
        raise ValueError("fwhm must be positive")
    f = np.asarray(f, dtype=float)
    out = (fwhm / (2.0 * np.pi)) / ((f - f0) ** 2 + (fwhm / 2.0) ** 2)
    return out if out.ndim else float(out)


def sxx_thermal(f, mode: MechanicalMode, th: ThermalState):
    """Thermal displacement PSD x_zpf^2 * 2 n_th * L(f), in m^2/Hz.

    Integrates to k_B T / (m_eff Omega_m^2) in the high-temperature limit.
    """
    xzpf = zero_point_fluctuation(mode)
    return xzpf * xzpf * 2.0 * th.n_th * lorentzian(f, mode.f_m, mode.gamma_m)


def s_freq_mech(f, g0: float, mode: MechanicalMode, th: ThermalState):
    """Resonator frequency-noise PSD g0^2 * 2 n_th * L(f), in Hz^2/Hz."""
    return g0 * g0 * 2.0 * th.n_th * lorentzian(f, mode.f_m, mode.gamma_m)


def s_freq_cal(tone: CalibrationTone, enbw: float) -> float:
    """Single-bin PSD value of the calibration tone, in Hz^2/Hz.

    The tone carries total frequency-deviation variance phi0^2 f_mod^2 / 2,
    concentrated in the bin containing f_mod.
    """
    if enbw <= 0:
        raise ValueError("enbw must be positive")
    return (tone.phi0 ** 2) * (tone.f_mod ** 2) / 2.0 / enbw


def suu_forward(
    f,
    g0: float,
    mode: MechanicalMode,
    th: ThermalState,
    tone: CalibrationTone | None,
    chain: DetectionChain,
    enbw: float | None = None,
    n_avg: int = 1,
) -> Spectrum:
    """Voltage PSD of the down-converted probe:
    S_UU = gain * (Y * S_nu_mech + S_nu_cal) + s_imp, in V^2/Hz.
    """
    f = np.asarray(f, dtype=float)
    if enbw is None:
        enbw = float(np.min(np.diff(f)))
    svv = chain.transfer_ratio_y * s_freq_mech(f, g0, mode, th)
    values = chain.gain * svv + chain.s_imp
    spec = Spectrum(f=f, values=values, unit="V^2/Hz", enbw=enbw, n_avg=n_avg)
    if tone is not None and tone.phi0 > 0:
        idx = spec.bin_index(tone.f_mod)
        spec.values[idx] += chain.gain * s_freq_cal(tone, enbw)
    return spec


def synthesize_noise(clean: Spectrum, n_avg: int, seed: int) -> Spectrum:
    """Averaged-periodogram noise: each bin ~ Gamma(n_avg, mean = clean bin).

    Each bin draws from its own counter block of a Philox stream keyed by
    `seed`, so the output is bit-reproducible regardless of evaluation
    order or parallel chunking.
    """
    if n_avg < 1:
        raise ValueError("n_avg must be >= 1")
    shape = float(n_avg)
    values = np.empty_like(clean.values)
    for i, mean in enumerate(clean.values):
        gen = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, i]))
        values[i] = gen.gamma(shape, mean / shape) if mean > 0 else 0.0
    return replace(clean, values=values, n_avg=int(n_avg))


def suu_to_sxx(
    meas: Spectrum,
    g0: float,
    mode: MechanicalMode,
    chain: DetectionChain,
    floor: float | None = None,
):
    """Convert a voltage PSD to displacement units:
    S_xx = (S_UU - floor) * x_zpf^2 / (gain * Y * g0^2), in m^2/Hz.

    Negative excursions after floor subtraction are clipped to zero.

    Returns
    -------
    (Spectrum, int)
        The displacement spectrum and the number of clipped bins.
    """
    if meas.unit != "V^2/Hz":
        raise InputDataError(f"expected V^2/Hz spectrum, got {meas.unit!r}")
    if g0 <= 0:
        raise InputDataError("conversion requires a known positive g0")
    if floor is None:
        floor = chain.s_imp
    xzpf = zero_point_fluctuation(mode)
    scale = xzpf * xzpf / (chain.gain * chain.transfer_ratio_y * g0 * g0)
    raw = (meas.values - floor) * scale
    clipped = int(np.sum(raw < 0.0))
    out = meas.with_values(np.clip(raw, 0.0, None), unit="m^2/Hz")
    return out, clipped


def transfer_ratio_estimate(line, f_m: float, f_mod: float) -> float:
    """Optional estimate of the transfer ratio from the resonator filter.

    Models the sideband filter of a probe parked one mechanical frequency
    above resonance: |H(f)|^2 ~ 1 / ((kappa/2)^2 + (f_m - f)^2), evaluated
    at the mechanical peak versus the calibration tone.
    """
    half_k = line.kappa_total / 2.0
    return 1.0 + ((f_m - f_mod) / half_k) ** 2
