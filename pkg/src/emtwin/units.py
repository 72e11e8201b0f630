"""Physical constants, unit conventions, and core mechanical/thermal types.

Conventions used throughout the package:

* Spectral densities are ONE-SIDED and expressed per ordinary frequency
  (unit/Hz).
* Every quantity named like a rate or frequency in a public signature is in
  ordinary frequency (Hz). Formulas that are natively angular pick up their
  explicit 2*pi factors inside the function that evaluates them.
* Linewidths are full width at half maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants as _const

# CODATA values. The flux quantum h/2e is exact since the 2019 SI redefinition.
HBAR = _const.hbar  # J s
K_B = _const.k  # J/K
PHI0 = _const.physical_constants["mag. flux quantum"][0]  # Wb


@dataclass(frozen=True)
class MechanicalMode:
    """A high-Q string oscillator.

    Parameters
    ----------
    f_m : float
        Mechanical resonance frequency in Hz.
    gamma_m : float
        FWHM linewidth in Hz. Must satisfy gamma_m < f_m / 10.
    m_eff : float
        Effective mass in kg.
    length : float
        String length in m.
    modeshape_factor : float
        Dimensionless flux-pickup reduction of the mode shape, in (0, 1].
    """

    f_m: float
    gamma_m: float
    m_eff: float
    length: float
    modeshape_factor: float = 1.0

    def __post_init__(self):
        if self.f_m <= 0:
            raise ValueError("f_m must be positive")
        if self.gamma_m <= 0:
            raise ValueError("gamma_m must be positive")
        if self.m_eff <= 0:
            raise ValueError("m_eff must be positive")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if not 0 < self.modeshape_factor <= 1:
            raise ValueError("modeshape_factor must be in (0, 1]")
        if self.gamma_m >= self.f_m / 10:
            raise ValueError("high-Q assumption violated: gamma_m must be < f_m/10")


@dataclass(frozen=True)
class ThermalState:
    """Bath temperature and the mean phonon occupation it implies."""

    temperature: float
    n_th: float

    def __post_init__(self):
        if self.n_th < 0:
            raise ValueError("n_th must be non-negative")

    @classmethod
    def from_temperature(cls, f_m: float, temperature: float) -> "ThermalState":
        """Construct from a bath temperature, evaluating the Bose factor at f_m."""
        return cls(temperature=temperature, n_th=thermal_occupation(f_m, temperature))


def zero_point_fluctuation(mode: MechanicalMode) -> float:
    """RMS ground-state displacement sqrt(hbar / (2 m_eff Omega_m)) in m."""
    return math.sqrt(HBAR / (2.0 * mode.m_eff * 2.0 * math.pi * mode.f_m))


def thermal_occupation(f_m: float, temperature: float) -> float:
    """Mean Bose occupation 1 / (exp(hbar Omega / k_B T) - 1).

    Agrees with the classical limit k_B T / (hbar Omega) to better than 1%
    once that ratio exceeds ~50.
    """
    if f_m <= 0:
        raise ValueError("f_m must be positive")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    x = HBAR * 2.0 * math.pi * f_m / (K_B * temperature)
    return 1.0 / math.expm1(x)
