"""Acceptance suite: one test per criterion, each printing a PASS line with
the measured numbers (run with `pytest -s` to see them inline).
"""

import time

import numpy as np
import pytest

from emtwin import fitengine
from emtwin.bessel import (
    fit_amplitude,
    modulation_index,
    required_n_max,
    s21_driven,
    sum_rule_deficit,
)
from emtwin.calibration import extract_g0, force_sensitivity, gamma_em, susceptibility
from emtwin.lineshape import LineshapeParams, s21_squared
from emtwin.spectra import (
    CalibrationTone,
    Spectrum,
    lorentzian,
    suu_forward,
    sxx_thermal,
    synthesize_noise,
)
from emtwin.squid import (
    FluxAxis,
    ResonatorGeometry,
    SquidParams,
    coupling_g0,
    fit_flux_map,
    flux_sweep,
    josephson_inductance,
    responsivity_sweep,
)
from emtwin.units import MechanicalMode, ThermalState, zero_point_fluctuation


def _best_time(fn, repeats=3):
    fn()  # warm-up
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def test_criterion_1_zero_point_motion():
    mode = MechanicalMode(f_m=6.343e6, gamma_m=33.6, m_eff=0.6e-15, length=20e-6,
                          modeshape_factor=0.99)
    xzpf, dt = _best_time(lambda: zero_point_fluctuation(mode))
    assert abs(xzpf - 47e-15) / 47e-15 < 0.01
    assert dt < 1e-3
    print(f"\nACCEPTANCE 1 PASS: x_zpf = {xzpf*1e15:.3f} fm (47 fm +- 1%), {dt*1e6:.1f} us")


def test_criterion_2_josephson_inductance():
    squid = SquidParams(i_c=0.44e-6)
    lj, dt = _best_time(lambda: josephson_inductance(squid, 0.0))
    assert 0.355e-9 <= lj <= 0.380e-9
    assert dt < 1e-3
    print(f"ACCEPTANCE 2 PASS: L_J = {lj*1e9:.4f} nH in [0.355, 0.380] nH, {dt*1e6:.1f} us")


def test_criterion_3_coupling_chain():
    mode = MechanicalMode(f_m=6.343e6, gamma_m=33.6, m_eff=0.6e-15, length=20e-6,
                          modeshape_factor=0.99)

    def run():
        return coupling_g0(6.6e9, 470e-6, mode)

    g0, dt = _best_time(run)
    slope = g0 / 470e-6
    assert 3.13e6 - 2 * 0.20e6 <= slope <= 3.13e6 + 2 * 0.20e6
    assert 1.30e3 <= g0 <= 1.74e3
    assert dt < 1e-3
    print(
        f"ACCEPTANCE 3 PASS: dg0/dB = {slope/1e6:.3f} MHz/T (3.13 +- 0.40), "
        f"g0 = {g0:.1f} Hz in [1300, 1740], {dt*1e6:.1f} us"
    )


def test_criterion_4_flux_map(device):
    geom, squid, axis = device.geometry, device.squid, device.flux_axis

    # synthesize a map hitting the two anchors: 7.45 GHz maximum and
    # 6.7 GHz at the map edge
    phis_data = np.linspace(-0.40843, 0.40843, 61)
    f_data = flux_sweep(geom, squid, phis_data)
    assert np.max(f_data) == pytest.approx(7.45e9, rel=5e-3)
    assert f_data[0] == pytest.approx(6.7e9, rel=5e-3)
    b_data = phis_data / (axis.area_eff / 2.067833848e-15)
    fit = fit_flux_map(
        np.column_stack([b_data, f_data]),
        ResonatorGeometry(geom.f0_bare * 1.03, geom.z0),
        SquidParams(squid.i_c * 0.95),
        axis_guess=FluxAxis(offset=1e-17, area_eff=axis.area_eff * 1.05),
    )

    phis = np.linspace(1e-4, 0.4999, 10_000)

    def sweep():
        f = flux_sweep(fit.geometry, fit.squid, phis)
        r = responsivity_sweep(fit.geometry, fit.squid, phis)
        return f, r

    (f_c, resp), dt = _best_time(sweep, repeats=1)
    assert np.all(np.isfinite(f_c))
    assert np.all(np.diff(f_c) < 0), "monotone decreasing on (0, 0.5)"
    max_resp = float(np.max(np.abs(resp)))
    assert max_resp > 10e9
    assert dt < 1.0
    print(
        f"ACCEPTANCE 4 PASS: |responsivity| up to {max_resp/1e9:.1f} GHz/Phi0 > 10, "
        f"monotone over 10^4 points in {dt*1e3:.0f} ms"
    )


def test_criterion_5_g0_round_trip(paper_mode, paper_tone, paper_chain, suu_axis):
    th = ThermalState(temperature=0.185, n_th=607.0)
    clean = suu_forward(suu_axis, 1620.0, paper_mode, th, paper_tone, paper_chain)

    t0 = time.perf_counter()
    hits = 0
    estimates = []
    for seed in range(100):
        noisy = synthesize_noise(clean, 50, seed)
        res = extract_g0(noisy, paper_tone, 607.0)
        estimates.append(res.g0)
        if abs(res.g0 - 1620.0) <= 3.0 * res.std_err:
            hits += 1
    dt = time.perf_counter() - t0
    bias = abs(np.median(estimates) / 1620.0 - 1.0)
    assert hits >= 95
    assert bias <= 0.02
    assert dt < 10.0
    print(
        f"ACCEPTANCE 5 PASS: {hits}/100 seeds within 3 sigma (>=95), "
        f"median bias {bias*100:.2f}% (<=2%), {dt:.1f} s (<10 s)"
    )


def test_criterion_6_back_action():
    line = LineshapeParams(6.887e9, 0.464348e6, 6.5e6 - 0.464348e6)  # kappa 6.5 MHz
    f_m = 6.34311e6

    def run():
        return gamma_em(1620.0, 1.6, line, f_m, +f_m)

    val, dt = _best_time(run)
    assert abs(val - (-2.6)) <= 0.1 * 2.6
    for delta in (0.3 * f_m, f_m, 2.5 * f_m):
        assert gamma_em(1620.0, 1.6, line, f_m, delta) == -gamma_em(
            1620.0, 1.6, line, f_m, -delta
        )
    assert dt < 1e-3
    print(f"ACCEPTANCE 6 PASS: gamma_em = {val:.3f} Hz (-2.6 +- 10%), odd exact, {dt*1e6:.1f} us")


def test_criterion_7_force_sensitivity(paper_mode):
    th = ThermalState.from_temperature(paper_mode.f_m, 0.126)
    f = paper_mode.f_m + np.linspace(-5 * paper_mode.gamma_m, 5 * paper_mode.gamma_m, 2001)

    def run():
        sxx = Spectrum(f=f, values=sxx_thermal(f, paper_mode, th), unit="m^2/Hz",
                       enbw=f[1] - f[0])
        return force_sensitivity(sxx, paper_mode), sxx

    (sff, sxx), dt = _best_time(run)
    on_res = float(np.sqrt(sff.values[sxx.bin_index(paper_mode.f_m)]))
    assert 0.5e-18 <= on_res <= 1.5e-18
    chi = susceptibility(f, paper_mode)
    ref = 2.0 * sxx.values / np.abs(chi) ** 2
    assert np.max(np.abs(sff.values - ref) / ref) < 1e-12
    assert dt < 0.1
    print(
        f"ACCEPTANCE 7 PASS: sqrt(S_FF) = {on_res*1e18:.2f} aN/rtHz in [0.5, 1.5], "
        f"identity to 1e-12, {dt*1e3:.1f} ms"
    )


def test_criterion_8_bessel(paper_mode):
    line = LineshapeParams(6.887e9, 0.46e6, 0.34e6)
    f_m = paper_mode.f_m

    # beta = 0 reduction
    d = np.linspace(-2e7, 2e7, 4001)
    reduction = np.max(np.abs(s21_driven(d, line, 0.0, f_m) - s21_squared(d, line)))
    assert reduction < 1e-14

    # sum rule at default truncation for beta <= 8
    worst_deficit = max(sum_rule_deficit(b, 14) for b in np.linspace(0.5, 8.0, 16))
    assert worst_deficit < 1e-6

    # round trip at beta = 5 with 1% noise
    g0 = 1.4e3
    xzpf = zero_point_fluctuation(paper_mode)
    x0_true = 5.0 * xzpf * f_m / g0
    span = 9.0 * f_m
    ftr = np.linspace(line.f_c - span, line.f_c + span, 4001)
    y = s21_driven(ftr - line.f_c, line, 5.0, f_m, required_n_max(5.0))
    y = np.clip(y + 0.01 * np.random.default_rng(12).standard_normal(ftr.size), 0, 1)
    trace = Spectrum(f=ftr, values=y, unit="dimensionless", enbw=ftr[1] - ftr[0])
    fit = fit_amplitude(trace, line, g0, paper_mode)
    x0_err = abs(fit.x0 - x0_true) / x0_true
    assert x0_err < 0.02

    # sqrt(V) sweep with 20 voltages
    t0 = time.perf_counter()
    volts = np.linspace(0.002, 0.02, 20)
    c = 2.0e-9 / np.sqrt(0.019)
    rng = np.random.default_rng(31)
    x0s = []
    for i, v in enumerate(volts):
        beta = modulation_index(g0, c * np.sqrt(v), xzpf, f_m)
        span = (beta + 4.0) * f_m
        fv = np.linspace(line.f_c - span, line.f_c + span, 3001)
        yv = s21_driven(fv - line.f_c, line, beta, f_m, required_n_max(beta))
        yv = np.clip(yv + 0.01 * rng.standard_normal(fv.size), 0, 1)
        tr = Spectrum(f=fv, values=yv, unit="dimensionless", enbw=fv[1] - fv[0])
        x0s.append(fit_amplitude(tr, line, g0, paper_mode).x0)
    lv, lx = np.log(volts), np.log(x0s)
    design = np.vstack([lv, np.ones_like(lv)]).T
    coef, *_ = np.linalg.lstsq(design, lx, rcond=None)
    dt = time.perf_counter() - t0
    assert abs(coef[0] - 0.50) <= 0.02
    assert dt < 30.0
    print(
        f"ACCEPTANCE 8 PASS: reduction {reduction:.1e} < 1e-14, deficit {worst_deficit:.1e} "
        f"< 1e-6, x0 err {x0_err*100:.2f}% < 2%, exponent {coef[0]:.3f} (0.50 +- 0.02), "
        f"{dt:.1f} s (<30 s)"
    )


def test_criterion_9_solver():
    t0 = time.perf_counter()

    # linear exactness
    x = np.linspace(0, 1, 50)
    y = 2.5 * x + 1.0
    out = fitengine.solve(
        fitengine.FitProblem(residual=lambda p: p[0] * x + p[1] - y,
                             p0=np.array([1.0, 0.0]), max_iter=2)
    )
    assert out.params == pytest.approx([2.5, 1.0], abs=1e-10)

    # Rosenbrock
    out = fitengine.solve(
        fitengine.FitProblem(
            residual=lambda p: np.array([10 * (p[1] - p[0] ** 2), 1 - p[0]]),
            p0=np.array([-1.2, 1.0]),
        )
    )
    assert out.params == pytest.approx([1.0, 1.0], abs=1e-8)

    # Monte-Carlo Lorentzian coverage
    f = np.linspace(-500.0, 500.0, 801)
    truth = np.array([12.0, 40.0, 300.0, 5.0])

    def model(p):
        return p[3] + p[2] * lorentzian(f, p[0], p[1])

    y_clean = model(truth)
    sigma = 0.02 * y_clean.max()
    hits = 0
    for seed in range(100):
        yn = y_clean + sigma * np.random.default_rng(seed).standard_normal(f.size)
        res = fitengine.solve(
            fitengine.FitProblem(
                residual=lambda p, yn=yn: model(p) - yn,
                p0=np.array([5.0, 60.0, 200.0, 4.0]),
                lower=np.array([-200.0, 1.0, 0.0, 0.0]),
                upper=np.array([200.0, 500.0, 1e5, 100.0]),
                x_scale=np.array([100.0, 50.0, 300.0, 5.0]),
            )
        )
        if np.all(np.abs(res.params - truth) <= 3.0 * res.std_errors()):
            hits += 1
    dt = time.perf_counter() - t0
    assert hits >= 95
    assert dt < 10.0
    print(
        f"ACCEPTANCE 9 PASS: linear exact, Rosenbrock converged, "
        f"Lorentzian coverage {hits}/100 (>=95), {dt:.1f} s (<10 s)"
    )
