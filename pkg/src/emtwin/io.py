"""File formats: spectrum CSV + JSON sidecar, flux-map CSV, atomic writes.

All tables are self-describing (header row, unit suffixes in column names)
and written with plain decimal-point formatting, never locale-dependent.
Writes go through a temp-file-then-rename so partial files never appear.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InputDataError
from .spectra import Spectrum


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_spectrum(csv_path, spec: Spectrum, seed: int | None = None,
                   extra_meta: dict | None = None) -> None:
    """Write a spectrum CSV plus a `{unit, enbw_hz, n_avg, seed?}` sidecar.

    PSD spectra use the column header `f_hz,value`; transmission traces
    (`dimensionless`) use `f_hz,s21_sq`. Extra metadata (e.g. probe power)
    merges into the sidecar.
    """
    value_col = "s21_sq" if spec.unit == "dimensionless" else "value"
    lines = [f"f_hz,{value_col}"]
    lines += [f"{_fmt(f)},{_fmt(v)}" for f, v in zip(spec.f, spec.values)]
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    meta = {"unit": spec.unit, "enbw_hz": spec.enbw, "n_avg": spec.n_avg}
    if seed is not None:
        meta["seed"] = seed
    if extra_meta:
        meta.update(extra_meta)
    write_json(sidecar_path(csv_path), meta)


def read_spectrum(csv_path) -> Spectrum:
    """Read a spectrum CSV and its JSON sidecar back into a Spectrum."""
    csv_path = Path(csv_path)
    side = sidecar_path(csv_path)
    if not csv_path.exists():
        raise InputDataError(f"spectrum file not found: {csv_path}")
    if not side.exists():
        raise InputDataError(f"missing sidecar {side} for {csv_path}")
    try:
        arr = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise InputDataError(f"cannot parse {csv_path}: {exc}") from exc
    with open(side) as fh:
        meta = json.load(fh)
    for key in ("unit", "enbw_hz", "n_avg"):
        if key not in meta:
            raise InputDataError(f"sidecar {side} missing field {key!r}")
    return Spectrum(
        f=arr[:, 0],
        values=arr[:, 1],
        unit=meta["unit"],
        enbw=float(meta["enbw_hz"]),
        n_avg=int(meta["n_avg"]),
    )


def write_table(path, header: str, rows) -> None:
    """Write a generic CSV table; rows are iterables of floats/strings."""
    lines = [header]
    for row in rows:
        lines.append(",".join(x if isinstance(x, str) else _fmt(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_flux_map_csv(path) -> np.ndarray:
    """Read a `b_ext_tesla,f_c_hz` table into an (n, 2) array."""
    path = Path(path)
    if not path.exists():
        raise InputDataError(f"flux map not found: {path}")
    with open(path) as fh:
        header = fh.readline().strip()
    if header.split(",")[:2] != ["b_ext_tesla", "f_c_hz"]:
        raise InputDataError(
            f"{path}: expected header 'b_ext_tesla,f_c_hz', got {header!r}"
        )
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, :2]
    except ValueError as exc:
        raise InputDataError(f"cannot parse {path}: {exc}") from exc
