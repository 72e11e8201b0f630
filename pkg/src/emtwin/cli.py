"""Command-line surface tying the models into reproducible workflows.

Exit codes: 0 success, 2 input error, 3 fit failure, 4 model-domain error.
Every command writes a manifest (config/input hashes, seed, tool version)
next to its outputs so runs can be replayed.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import __version__, bessel, calibration, io, lineshape, spectra, squid
from .config import REPORT_SCHEMA, DeviceConfig, RunManifest
from .errors import EmtwinError, FitError, InputDataError, ModelDomainError
from .units import ThermalState, zero_point_fluctuation


def _max_workers() -> int:
    raw = os.environ.get("EMTWIN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except InputDataError as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(2)
        except FitError as exc:
            click.echo(f"fit error: {exc}", err=True)
            sys.exit(3)
        except ModelDomainError as exc:
            click.echo(f"model-domain error: {exc}", err=True)
            sys.exit(4)
        except EmtwinError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


def validate_report(report: dict) -> None:
    schema = json.loads(REPORT_SCHEMA.read_text())
    jsonschema.validate(report, schema)


def _write_report(path, report: dict) -> None:
    validate_report(report)
    io.write_json(path, report)


@click.group()
@click.version_option(version=__version__)
def main():
    """Simulation and parameter extraction for a flux-tunable
    electromechanical resonator."""


@main.command("flux-map")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--phi-min", default=-0.5, show_default=True)
@click.option("--phi-max", default=0.5, show_default=True)
@click.option("--points", default=1001, show_default=True)
@click.option("--seed", default=0, show_default=True, help="Recorded in the manifest.")
@_handle_errors
def cmd_flux_map(config_path, out_dir, phi_min, phi_max, points, seed):
    """Tabulate resonance frequency and responsivity over a flux range."""
    cfg = DeviceConfig.from_file(config_path)
    out = Path(out_dir)
    if points < 1:
        raise InputDataError("--points must be >= 1")
    phis = np.linspace(phi_min, phi_max, points)
    f_c = squid.flux_sweep(cfg.geometry, cfg.squid, phis)
    resp = squid.responsivity_sweep(cfg.geometry, cfg.squid, phis)

    io.write_table(
        out / "flux_map.csv",
        "phi,f_c_hz,responsivity_hz_per_phi0",
        zip(phis, f_c, resp),
    )
    finite = np.isfinite(f_c)
    n_div = int(np.sum(~finite))
    i_max = int(np.nanargmax(np.where(finite, f_c, -np.inf)))
    report = {
        "report_type": "flux_map",
        "tool_version": __version__,
        "working_point": None,
        "inputs": [str(config_path)],
        "results": {
            "points": int(points),
            "max_f_c_hz": float(f_c[i_max]),
            "phi_at_max": float(phis[i_max]),
            "max_abs_responsivity_hz_per_phi0": float(np.nanmax(np.abs(resp)))
            if finite.any()
            else 0.0,
            "diverged_points": n_div,
        },
        "units": {"f_c": "Hz", "responsivity": "Hz/Phi0"},
    }
    _write_report(out / "flux_map_report.json", report)
    RunManifest.create("flux-map", config_path, seed=seed).write(out / "manifest.json")
    click.echo(f"flux map: {points} points, {n_div} in the divergence window -> {out}")


def _thermal_axis(cfg, points, spacing):
    # Grid aligned so both the calibration tone and the mechanical peak sit
    # exactly on bins when their separation is a multiple of the spacing.
    i_mod = int(round(0.3 * points))
    return cfg.tone.f_mod + (np.arange(points) - i_mod) * spacing


@main.command("synth")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--scenario", required=True, type=click.Choice(["thermal", "driven"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--g0-hz", default=1620.0, show_default=True)
@click.option("--points", default=2501, show_default=True)
@click.option("--spacing-hz", default=2.0, show_default=True, help="thermal bin width")
@click.option("--n-avg", default=50, show_default=True)
@click.option("--beta", default=5.0, show_default=True, help="driven modulation index")
@click.option("--working-point", default="K", show_default=True)
@_handle_errors
def cmd_synth(config_path, out_dir, scenario, seed, g0_hz, points, spacing_hz, n_avg, beta, working_point):
    """Generate clean + noisy synthetic spectra for a scenario."""
    cfg = DeviceConfig.from_file(config_path)
    out = Path(out_dir)
    th = ThermalState.from_temperature(cfg.mode.f_m, cfg.temperature)

    if scenario == "thermal":
        f = _thermal_axis(cfg, points, spacing_hz)
        clean = spectra.suu_forward(f, g0_hz, cfg.mode, th, cfg.tone, cfg.chain)
        stem = "thermal"
    else:
        line = cfg.line(working_point)
        n_max = bessel.required_n_max(beta)
        span = (beta + 4.0) * cfg.mode.f_m
        f = np.linspace(line.f_c - span, line.f_c + span, points)
        values = bessel.s21_driven(f - line.f_c, line, beta, cfg.mode.f_m, n_max)
        clean = spectra.Spectrum(
            f=f, values=values, unit="dimensionless", enbw=float(f[1] - f[0])
        )
        stem = "driven"

    noisy = spectra.synthesize_noise(clean, n_avg, seed)
    io.write_spectrum(out / f"{stem}_clean.csv", clean)
    io.write_spectrum(out / f"{stem}_noisy.csv", noisy, seed=seed)
    RunManifest.create("synth", config_path, seed=seed).write(out / "manifest.json")
    click.echo(f"synth {scenario}: {points} bins -> {out}")


def _extract_psd(cfg, spec, working_point):
    """Full PSD pipeline: g0, displacement conversion, derived quantities."""
    th = ThermalState.from_temperature(cfg.mode.f_m, cfg.temperature)
    gz = calibration.extract_g0(
        spec, cfg.tone, th.n_th, transfer_ratio_y=cfg.chain.transfer_ratio_y
    )
    peak = calibration.fit_lorentzian_peak(spec, exclude=(cfg.tone.f_mod,))
    sxx, _ = spectra.suu_to_sxx(spec, gz.g0, cfg.mode, cfg.chain, floor=peak.floor)
    sff = calibration.force_sensitivity(sxx, cfg.mode)
    i_res = sxx.bin_index(gz.f_m_fit)

    line = cfg.line(working_point)
    probe = calibration.ProbeTone(
        f_p=line.f_c + cfg.probe_detuning,
        power=cfg.probe_power,
        detuning=cfg.probe_detuning,
    )
    n_phot = calibration.photon_number(probe, line)
    g_em = calibration.gamma_em(gz.g0, n_phot, line, cfg.mode.f_m, cfg.probe_detuning)
    n_eff = calibration.effective_occupation(th.n_th, gz.gamma_m_fit, g_em)

    results = {
        "lineshape": None,
        "g0_hz": gz.g0,
        "g0_err_hz": gz.std_err,
        "gamma_m_fit_hz": gz.gamma_m_fit,
        "f_m_fit_hz": gz.f_m_fit,
        "n_th": th.n_th,
        "n_phot": n_phot,
        "gamma_em_hz": g_em,
        "n_eff": n_eff,
        "force_sensitivity_an_rthz": float(np.sqrt(sff.values[i_res]) * 1e18),
    }
    fit_cols = peak.model(spec.f)
    return results, fit_cols


def _extract_trace(cfg, spec, working_point):
    res = lineshape.fit_resonance(spec, cfg.line(working_point))
    p, alt = res.params, res.params_alt
    results = {
        "lineshape": {
            "f_c_hz": p.f_c,
            "kappa_ext_hz": p.kappa_ext,
            "kappa_int_hz": p.kappa_int,
            "kappa_total_hz": p.kappa_total,
            "f_c_err_hz": res.std_errors["f_c"],
            "kappa_ext_err_hz": res.std_errors["kappa_ext"],
            "kappa_int_err_hz": res.std_errors["kappa_int"],
            "background": res.background,
            "ambiguous": res.ambiguous,
            "alt_kappa_ext_hz": alt.kappa_ext,
            "alt_kappa_int_hz": alt.kappa_int,
            "sideband_resolved": res.sideband_resolved(cfg.mode.f_m),
        },
        "g0_hz": None,
    }
    fit_cols = res.background * lineshape.s21_squared(spec.f - p.f_c, p)
    return results, fit_cols


@main.command("extract")
@click.argument("spectra_paths", nargs=-1, required=True, type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--working-point", default="K", show_default=True)
@click.option("--seed", default=0, show_default=True, help="Recorded in the manifest.")
@_handle_errors
def cmd_extract(spectra_paths, config_path, out_dir, working_point, seed):
    """Fit measured or synthetic spectra and emit an analysis report."""
    cfg = DeviceConfig.from_file(config_path)
    out = Path(out_dir)
    merged = {"lineshape": None, "g0_hz": None}
    for path in spectra_paths:
        spec = io.read_spectrum(path)
        if spec.unit == "V^2/Hz":
            results, fit_cols = _extract_psd(cfg, spec, working_point)
        elif spec.unit == "dimensionless":
            results, fit_cols = _extract_trace(cfg, spec, working_point)
        else:
            raise InputDataError(f"{path}: no extraction for unit {spec.unit!r}")
        merged.update({k: v for k, v in results.items() if v is not None})
        stem = Path(path).stem
        lines = ["f_hz\tdata\tfit"]
        lines += [
            "\t".join(format(float(x), ".17g") for x in row)
            for row in zip(spec.f, spec.values, fit_cols)
        ]
        io.atomic_write_text(out / f"{stem}_fit.tsv", "\n".join(lines) + "\n")

    report = {
        "report_type": "extract",
        "tool_version": __version__,
        "working_point": working_point,
        "inputs": [str(p) for p in spectra_paths],
        "results": merged,
        "units": {
            "g0": "Hz",
            "gamma_m": "Hz",
            "kappa": "Hz",
            "gamma_em": "Hz",
            "force_sensitivity": "aN/sqrt(Hz)",
        },
    }
    _write_report(out / "report.json", report)
    RunManifest.create("extract", config_path, inputs=spectra_paths, seed=seed).write(
        out / "manifest.json"
    )
    click.echo(f"extract: report -> {out / 'report.json'}")


def _sqrt_regression(v, x0):
    """Log-log linear regression of amplitude versus drive voltage."""
    lv, lx = np.log(v), np.log(x0)
    a = np.vstack([lv, np.ones_like(lv)]).T
    coef, res_ss, *_ = np.linalg.lstsq(a, lx, rcond=None)
    pred = a @ coef
    ss_tot = float(np.sum((lx - np.mean(lx)) ** 2))
    r2 = 1.0 - float(np.sum((lx - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    dof = max(len(v) - 2, 1)
    sigma2 = float(np.sum((lx - pred) ** 2)) / dof
    cov = sigma2 * np.linalg.inv(a.T @ a)
    return float(coef[0]), float(np.sqrt(cov[0, 0])), r2


@main.command("bessel-sweep")
@click.option("--manifest", "sweep_manifest", required=True, type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--working-point", default="K", show_default=True)
@click.option("--g0-hz", default=1400.0, show_default=True,
              help="Coupling rate from independent calibration.")
@click.option("--seed", default=0, show_default=True, help="Recorded in the manifest.")
@_handle_errors
def cmd_bessel_sweep(sweep_manifest, config_path, out_dir, working_point, g0_hz, seed):
    """Fit a drive-voltage sweep of split transmission traces."""
    cfg = DeviceConfig.from_file(config_path)
    out = Path(out_dir)
    line = cfg.line(working_point)
    man_path = Path(sweep_manifest)
    if not man_path.exists():
        raise InputDataError(f"sweep manifest not found: {man_path}")
    try:
        entries = json.loads(man_path.read_text())
    except json.JSONDecodeError as exc:
        raise InputDataError(f"{man_path}: invalid JSON: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise InputDataError(f"{man_path}: expected a non-empty list of sweep entries")

    xzpf = zero_point_fluctuation(cfg.mode)

    def fit_one(entry):
        trace = io.read_spectrum(man_path.parent / entry["file"])
        return bessel.fit_amplitude(trace, line, g0_hz, cfg.mode)

    rows, failures, inputs = [], [], []
    with ThreadPoolExecutor(max_workers=_max_workers()) as pool:
        futures = [pool.submit(fit_one, e) for e in entries]
        for entry, fut in zip(entries, futures):
            inputs.append(str(man_path.parent / entry["file"]))
            try:
                fit = fut.result()
                rows.append(
                    (
                        float(entry["v_piezo_volts"]),
                        fit.x0,
                        fit.x0_err,
                        bessel.coherent_phonon_number(fit.x0, xzpf),
                    )
                )
            except EmtwinError as exc:
                failures.append(f"{entry['file']}: {type(exc).__name__}: {exc}")

    io.write_table(out / "amplitude_vs_drive.csv", "v_piezo,x0_m,x0_err_m,n_phon", rows)
    regression = None
    if len(rows) >= 3:
        arr = np.array(rows)
        exp, exp_err, r2 = _sqrt_regression(arr[:, 0], arr[:, 1])
        regression = {"exponent": exp, "exponent_err": exp_err, "r_squared": r2}
    report = {
        "report_type": "bessel_sweep",
        "tool_version": __version__,
        "working_point": working_point,
        "inputs": [str(man_path), *inputs],
        "results": {"rows": len(rows), "regression": regression, "failures": failures},
        "units": {"x0": "m", "v_piezo": "V"},
    }
    _write_report(out / "sweep_report.json", report)
    RunManifest.create(
        "bessel-sweep", config_path, inputs=[man_path, *inputs], seed=seed
    ).write(out / "manifest.json")
    click.echo(
        f"bessel-sweep: {len(rows)} fits, {len(failures)} failures -> {out}"
    )


@main.command("report")
@click.argument("report_path", type=click.Path())
@_handle_errors
def cmd_report(report_path):
    """Validate and pretty-print an analysis report."""
    path = Path(report_path)
    if not path.exists():
        raise InputDataError(f"report not found: {path}")
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputDataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        validate_report(report)
    except jsonschema.ValidationError as exc:
        raise InputDataError(f"{path}: schema violation: {exc.message}") from exc

    click.echo(f"report type : {report['report_type']}")
    click.echo(f"tool version: {report['tool_version']}")
    if report.get("working_point"):
        click.echo(f"working pt  : {report['working_point']}")
    units = report.get("units", {})
    for key, value in sorted(report["results"].items()):
        if value is None:
            continue
        if isinstance(value, dict):
            click.echo(f"  {key}:")
            for k2, v2 in sorted(value.items()):
                click.echo(f"    {k2} = {v2}")
        elif isinstance(value, float):
            unit = units.get(key.rsplit("_hz", 1)[0].rsplit("_an_rthz", 1)[0], "")
            click.echo(f"  {key} = {value:.6g} {unit}".rstrip())
        else:
            click.echo(f"  {key} = {value}")


if __name__ == "__main__":
    main()
