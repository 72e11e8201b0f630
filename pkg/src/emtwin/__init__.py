"""emtwin: forward models and parameter extraction for a flux-tunable,
sideband-resolved electromechanical resonator.
"""

from .units import (
    HBAR,
    K_B,
    PHI0,
    MechanicalMode,
    ThermalState,
    thermal_occupation,
    zero_point_fluctuation,
)
from .squid import (
    FluxAxis,
    ResonatorGeometry,
    SquidParams,
    coupling_g0,
    fit_flux_map,
    josephson_inductance,
    resonance_frequency,
    responsivity,
)
from .lineshape import LineshapeParams, fit_resonance, s21_squared
from .spectra import (
    CalibrationTone,
    DetectionChain,
    Spectrum,
    lorentzian,
    s_freq_cal,
    s_freq_mech,
    suu_forward,
    suu_to_sxx,
    sxx_thermal,
    synthesize_noise,
)
from .calibration import (
    GZeroResult,
    ProbeTone,
    effective_occupation,
    extract_g0,
    fit_lorentzian_peak,
    force_sensitivity,
    gamma_em,
    photon_number,
    susceptibility,
)
from .bessel import (
    DriveSweep,
    coherent_phonon_number,
    fit_amplitude,
    modulation_index,
    s21_driven,
)
from . import errors

__version__ = "0.1.0"
