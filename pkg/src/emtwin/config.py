"""Device configuration files and run manifests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .errors import InputDataError
from .lineshape import LineshapeParams
from .spectra import CalibrationTone, DetectionChain
from .squid import FluxAxis, ResonatorGeometry, SquidParams
from .units import MechanicalMode

PAPER_DEVICE = Path(__file__).parent / "data" / "paper_device.json"
REPORT_SCHEMA = Path(__file__).parent / "data" / "analysis_report.schema.json"


def _get(d: dict, path: str):
    node = d
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise InputDataError(f"config missing field '{path}'")
        node = node[part]
    return node


@dataclass(frozen=True)
class DeviceConfig:
    """Everything needed to forward-model and analyze one device."""

    squid: SquidParams
    geometry: ResonatorGeometry
    flux_axis: FluxAxis
    mode: MechanicalMode
    working_points: dict
    chain: DetectionChain
    tone: CalibrationTone
    temperature: float
    b_ext: float
    probe_power: float
    probe_detuning: float

    def line(self, label: str) -> LineshapeParams:
        if label not in self.working_points:
            raise InputDataError(
                f"unknown working point {label!r}; have {sorted(self.working_points)}"
            )
        return self.working_points[label]

    @classmethod
    def from_file(cls, path) -> "DeviceConfig":
        path = Path(path)
        if not path.exists():
            raise InputDataError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputDataError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_dict(raw, origin=str(path))

    @classmethod
    def from_dict(cls, raw: dict, origin: str = "<dict>") -> "DeviceConfig":
        try:
            wps = _get(raw, "working_points")
            if not isinstance(wps, dict) or not wps:
                raise InputDataError("working_points must be a non-empty mapping")
            points = {}
            for label, wp in wps.items():
                if label in points:
                    raise InputDataError(f"duplicate working point {label!r}")
                points[label] = LineshapeParams(
                    f_c=_get(wp, "f_c_hz"),
                    kappa_ext=_get(wp, "kappa_ext_hz"),
                    kappa_int=_get(wp, "kappa_int_hz"),
                )
            return cls(
                squid=SquidParams(
                    i_c=_get(raw, "squid.i_c_amps"),
                    asymmetry_d=raw.get("squid", {}).get("asymmetry_d", 0.0),
                ),
                geometry=ResonatorGeometry(
                    f0_bare=_get(raw, "geometry.f0_bare_hz"),
                    z0=_get(raw, "geometry.z0_ohms"),
                ),
                flux_axis=FluxAxis(
                    offset=_get(raw, "flux_axis.offset_wb"),
                    area_eff=_get(raw, "flux_axis.area_eff_m2"),
                ),
                mode=MechanicalMode(
                    f_m=_get(raw, "mode.f_m_hz"),
                    gamma_m=_get(raw, "mode.gamma_m_hz"),
                    m_eff=_get(raw, "mode.m_eff_kg"),
                    length=_get(raw, "mode.length_m"),
                    modeshape_factor=_get(raw, "mode.modeshape_factor"),
                ),
                working_points=points,
                chain=DetectionChain(
                    gain=_get(raw, "chain.gain_v2hz_per_hz2hz"),
                    s_imp=_get(raw, "chain.s_imp_v2_per_hz"),
                    transfer_ratio_y=raw.get("chain", {}).get("transfer_ratio_y", 1.0),
                ),
                tone=CalibrationTone(
                    f_mod=_get(raw, "calibration_tone.f_mod_hz"),
                    phi0=_get(raw, "calibration_tone.phi0_rad"),
                ),
                temperature=_get(raw, "environment.temperature_k"),
                b_ext=_get(raw, "environment.b_ext_tesla"),
                probe_power=_get(raw, "probe.power_w"),
                probe_detuning=_get(raw, "probe.detuning_hz"),
            )
        except (TypeError, ValueError) as exc:
            raise InputDataError(f"{origin}: {exc}") from exc


@dataclass
class RunManifest:
    """Record of one CLI run: enough to replay it byte for byte."""

    command: str
    config_path: str
    input_hashes: dict = field(default_factory=dict)
    seed: int = 0
    tool_version: str = ""
    timestamp: str = ""

    @classmethod
    def create(cls, command: str, config_path, inputs=(), seed: int = 0) -> "RunManifest":
        from . import __version__
        from .io import sha256_file

        hashes = {}
        for p in [config_path, *inputs]:
            if p is not None and Path(p).exists():
                hashes[str(p)] = sha256_file(p)
        return cls(
            command=command,
            config_path=str(config_path),
            input_hashes=hashes,
            seed=seed,
            tool_version=__version__,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )

    def write(self, path) -> None:
        from .io import write_json

        write_json(path, self.__dict__)
