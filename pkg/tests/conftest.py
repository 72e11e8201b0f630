import numpy as np
import pytest

from emtwin import (
    CalibrationTone,
    DetectionChain,
    LineshapeParams,
    MechanicalMode,
    ResonatorGeometry,
    SquidParams,
    ThermalState,
)
from emtwin.config import PAPER_DEVICE, DeviceConfig


@pytest.fixture(scope="session")
def paper_mode():
    return MechanicalMode(
        f_m=6.34311e6, gamma_m=33.6, m_eff=0.6e-15, length=20e-6, modeshape_factor=0.99
    )


@pytest.fixture(scope="session")
def paper_tone():
    return CalibrationTone(f_mod=6.34111e6, phi0=3.94e-4)


@pytest.fixture(scope="session")
def paper_chain():
    return DetectionChain(gain=1e-19, s_imp=1e-14, transfer_ratio_y=1.0)


@pytest.fixture(scope="session")
def thermal_185(paper_mode):
    return ThermalState(temperature=0.185, n_th=607.0)


@pytest.fixture(scope="session")
def device():
    return DeviceConfig.from_file(PAPER_DEVICE)


@pytest.fixture(scope="session")
def paper_geometry(device):
    return device.geometry


@pytest.fixture(scope="session")
def paper_squid(device):
    return device.squid


@pytest.fixture(scope="session")
def line_k(device):
    return device.line("K")


@pytest.fixture(scope="session")
def suu_axis(paper_tone):
    # 2 Hz bins with both the tone and the mechanical peak exactly on-grid
    return paper_tone.f_mod + (np.arange(2501) - 750) * 2.0
