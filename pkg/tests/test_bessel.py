import mpmath
import numpy as np
import pytest

from emtwin.bessel import (
    DriveSweep,
    bessel_j_array,
    coherent_phonon_number,
    fit_amplitude,
    modulation_index,
    required_n_max,
    s21_driven,
    sum_rule_deficit,
)
from emtwin.errors import BelowSplittingThreshold, NonConvergedSum
from emtwin.lineshape import LineshapeParams, s21_squared
from emtwin.spectra import Spectrum
from emtwin.units import zero_point_fluctuation

LINE = LineshapeParams(6.887e9, 0.46e6, 0.34e6)  # kappa << Omega_m
F_M = 6.34311e6


def _series_jn(n, x, dps=50):
    """Independent power-series oracle in arbitrary precision."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        total = mpmath.mpf(0)
        term_scale = (x / 2) ** n / mpmath.factorial(n)
        for k in range(200):
            term = (
                (-1) ** k
                * (x / 2) ** (n + 2 * k)
                / (mpmath.factorial(k) * mpmath.factorial(n + k))
            )
            total += term
            if abs(term) < mpmath.mpf(10) ** (-dps) * (abs(total) + abs(term_scale)):
                break
        return float(total)


@pytest.mark.parametrize("x", [0.1, 0.5, 2.0, 5.0, 8.0, 12.0, 20.0])
def test_bessel_downward_recurrence_vs_series(x):
    mine = bessel_j_array(30, x)
    for n in range(31):
        ref = _series_jn(n, x)
        assert abs(mine[n] - ref) <= 1e-10 * max(abs(ref), 1e-30)


def test_bessel_zero_argument():
    j = bessel_j_array(10, 0.0)
    assert j[0] == 1.0
    assert np.all(j[1:] == 0.0)


def test_modulation_index_frozen_value():
    # g0 = 1.4 kHz, x0 = 1 nm, x_zpf = 47 fm, f_m = 6.343 MHz
    beta = modulation_index(1.4e3, 1e-9, 47e-15, 6.343e6)
    assert beta == pytest.approx(4.696079779686772, rel=1e-12)
    assert beta == pytest.approx(4.70, rel=1e-3)


def test_modulation_index_linear():
    base = modulation_index(1.4e3, 1e-9, 47e-15, 6.343e6)
    assert modulation_index(1.4e3, 2e-9, 47e-15, 6.343e6) == 2 * base
    assert modulation_index(2.8e3, 1e-9, 47e-15, 6.343e6) == 2 * base
    assert modulation_index(1.4e3, 0.0, 47e-15, 6.343e6) == 0.0


def test_s21_driven_beta_zero_reduction():
    d = np.linspace(-2e7, 2e7, 4001)
    driven = s21_driven(d, LINE, 0.0, F_M)
    static = s21_squared(d, LINE)
    assert np.max(np.abs(driven - static)) < 1e-14


def test_s21_driven_even_in_detuning():
    d = np.linspace(-3e7, 3e7, 3001)
    fwd = s21_driven(d, LINE, 3.3, F_M)
    rev = s21_driven(-d, LINE, 3.3, F_M)
    assert np.array_equal(fwd, rev)


def test_s21_driven_minima_at_sideband_positions():
    # beta = 3, kappa << Omega_m: dips at Delta = -n Omega_m within kappa/10
    kappa = LINE.kappa_total
    for n in range(-4, 5):
        center = -n * F_M
        grid = np.linspace(center - kappa, center + kappa, 801)
        vals = s21_driven(grid, LINE, 3.0, F_M)
        found = grid[np.argmin(vals)]
        assert abs(found - center) < kappa / 10


def test_s21_driven_sum_rule_integral_beta_independent():
    kappa = LINE.kappa_total
    n_span = 16
    lim = n_span * F_M + 300 * kappa
    d = np.linspace(-lim, lim, 40001)
    integrals = []
    for beta in (0.0, 2.0, 5.0):
        absorbed = 1.0 - s21_driven(d, LINE, beta, F_M, n_max=required_n_max(beta))
        integrals.append(np.trapezoid(absorbed, d))
    ref = integrals[0]
    for val in integrals[1:]:
        assert abs(val - ref) / ref < 1e-3


def test_s21_driven_truncation_error_bounded():
    d = np.linspace(-8e7, 8e7, 2001)
    beta = 6.0
    deficit = sum_rule_deficit(beta, 14)
    a = s21_driven(d, LINE, beta, F_M, n_max=14)
    b = s21_driven(d, LINE, beta, F_M, n_max=40)
    assert np.max(np.abs(b - a)) <= deficit + 1e-15


def test_s21_driven_sum_rule_violation_raises():
    with pytest.raises(NonConvergedSum):
        s21_driven(0.0, LINE, 20.0, F_M, n_max=14)


def test_required_n_max():
    assert required_n_max(0.0) == 14
    assert required_n_max(8.0) == 14
    n20 = required_n_max(20.0)
    assert n20 > 14
    assert sum_rule_deficit(20.0, n20) < 1e-6


def test_sum_rule_deficit_default_truncation():
    for beta in (0.5, 2.0, 5.0, 8.0):
        assert sum_rule_deficit(beta, 14) < 1e-6


def _driven_trace(beta, noise=0.0, seed=0, points=4001, mode=None):
    span = (beta + 4.0) * F_M
    f = np.linspace(LINE.f_c - span, LINE.f_c + span, points)
    y = s21_driven(f - LINE.f_c, LINE, beta, F_M, n_max=required_n_max(beta))
    if noise:
        y = np.clip(y + noise * np.random.default_rng(seed).standard_normal(f.size), 0.0, 1.0)
    return Spectrum(f=f, values=y, unit="dimensionless", enbw=f[1] - f[0])


def test_fit_amplitude_fixed_point(paper_mode):
    g0 = 1.4e3
    xzpf = zero_point_fluctuation(paper_mode)
    trace = _driven_trace(5.0)
    fit = fit_amplitude(trace, LINE, g0, paper_mode)
    assert fit.beta == pytest.approx(5.0, abs=1e-6)
    x0_true = 5.0 * xzpf * paper_mode.f_m / g0
    assert fit.x0 == pytest.approx(x0_true, rel=1e-6)


def test_fit_amplitude_noisy_within_2_percent(paper_mode):
    g0 = 1.4e3
    xzpf = zero_point_fluctuation(paper_mode)
    x0_true = 5.0 * xzpf * paper_mode.f_m / g0
    fit = fit_amplitude(_driven_trace(5.0, noise=0.01, seed=8), LINE, g0, paper_mode)
    assert abs(fit.x0 - x0_true) / x0_true < 0.02


def test_fit_amplitude_below_threshold(paper_mode):
    trace = _driven_trace(0.0)
    with pytest.raises(BelowSplittingThreshold) as err:
        fit_amplitude(trace, LINE, 1.4e3, paper_mode)
    assert err.value.beta < 0.3


def test_fit_amplitude_sqrt_voltage_sweep(paper_mode):
    # x0 ~ sqrt(V): fitted exponent 0.50 +- 0.02, R^2 > 0.99
    g0 = 1.4e3
    xzpf = zero_point_fluctuation(paper_mode)
    rng = np.random.default_rng(17)
    volts = np.linspace(0.002, 0.02, 10)
    c = 2.0e-9 / np.sqrt(0.019)
    x0_fit = []
    for i, v in enumerate(volts):
        beta = modulation_index(g0, c * np.sqrt(v), xzpf, paper_mode.f_m)
        trace = _driven_trace(beta, noise=0.01, seed=100 + i, points=3001)
        x0_fit.append(fit_amplitude(trace, LINE, g0, paper_mode).x0)
    lv, lx = np.log(volts), np.log(x0_fit)
    design = np.vstack([lv, np.ones_like(lv)]).T
    coef, *_ = np.linalg.lstsq(design, lx, rcond=None)
    pred = design @ coef
    r2 = 1 - np.sum((lx - pred) ** 2) / np.sum((lx - np.mean(lx)) ** 2)
    assert coef[0] == pytest.approx(0.50, abs=0.02)
    assert r2 > 0.99


def test_coherent_phonon_number():
    assert coherent_phonon_number(2 * 47e-15, 47e-15) == 1.0
    assert coherent_phonon_number(0.0, 47e-15) == 0.0
    # frozen direct evaluation at x0 = 1 nm, x_zpf = 47 fm
    assert coherent_phonon_number(1e-9, 47e-15) == pytest.approx(
        113173381.62064286, rel=1e-12
    )
    assert coherent_phonon_number(1e-9, 47e-15) == pytest.approx(1.13e8, rel=5e-3)


def test_drive_sweep_type():
    trace = _driven_trace(1.0, points=501)
    sweep = DriveSweep(v_piezo=0.005, trace=trace)
    assert sweep.v_piezo == 0.005
    with pytest.raises(ValueError):
        DriveSweep(v_piezo=-1.0, trace=trace)
