"""Deterministic contraction kernels, Volterra audits, realized kernels."""

import math

import numpy as np
import pytest

from kgmix.dispersion import DispersionParams, omega
from kgmix.lattice import CutoffProfile
from kgmix.gaussian_lift import FieldEnsemble, FieldSample, TimeGrid
from kgmix.contraction_kernels import (
    IbpReport,
    _oscillatory_volterra,
    apply_volterra,
    build_diagonal_table,
    diagonal_kernel_D,
    hs_norm_estimate,
    integrated_kernel_K21,
    k21_kernel_on_grid,
    multiplier_M21,
    realized_kernel_A,
    realized_kernel_A_direct,
    volterra_ibp_check,
)
from kgmix.reporting import AuditReport

P12 = DispersionParams(1.0, 1.0, 2.0)
PROF = CutoffProfile()
PROF_HS = CutoffProfile(theta=0.1)


def test_diagonal_kernel_zero_lag_and_zero_start():
    assert diagonal_kernel_D(P12, PROF, 1, 2, 16, (0, 0, 0), 0.7, 0.7)[0] == 0.0
    assert diagonal_kernel_D(P12, PROF, 1, 2, 16, (0, 0, 0), 0.7, 0.0)[0] == 0.0


def test_diagonal_kernel_same_color_rejected():
    with pytest.raises(ValueError):
        diagonal_kernel_D(P12, PROF, 1, 1, 16, (0, 0, 0), 1.0, 0.5)


def test_diagonal_remainder_scaling():
    ratios = []
    for n in (8, 16, 32):
        _, _, rem = diagonal_kernel_D(P12, PROF, 1, 2, n, (0, 0, 0), 1.0, 0.5)
        ratios.append(abs(rem) * n ** (4 * P12.alpha - 3))
    assert max(ratios) <= 2.0


def test_diagonal_reorder_agreement():
    tot, _, _ = diagonal_kernel_D(P12, PROF, 1, 2, 16, (1, 0, 0), 1.0, 0.5)
    lex, _, _ = diagonal_kernel_D(P12, PROF, 1, 2, 16, (1, 0, 0), 1.0, 0.5, term_order="lex")
    rad, _, _ = diagonal_kernel_D(P12, PROF, 1, 2, 16, (1, 0, 0), 1.0, 0.5, term_order="radius")
    assert abs(tot - lex) <= 1e-10 * abs(tot)
    assert abs(tot - rad) <= 1e-10 * abs(tot)


def test_apply_volterra_zero_input_and_table_consistency():
    grid = TimeGrid(1.0, 64)
    tab = build_diagonal_table(P12, PROF, 1, 2, 8, grid, qs=np.array([[0, 0, 0]]))
    out = apply_volterra(tab, np.zeros((1, 65)), None, s2=0.5, alpha=1.0)
    assert np.all(out.paths == 0)
    # table values agree with the pointwise evaluation
    t, s = grid.times[40], grid.times[17]
    ref, lead, rem = diagonal_kernel_D(P12, PROF, 1, 2, 8, (0, 0, 0), float(t), float(s))
    assert math.isclose(tab.values[0, 40, 17], ref, rel_tol=1e-10)
    assert math.isclose(tab.leading[0, 40, 17], lead, rel_tol=1e-10)
    assert math.isclose(tab.remainder[0, 40, 17], rem, rel_tol=1e-9, abs_tol=1e-15)


def test_apply_volterra_synthetic_single_phase():
    # kernel s * exp(i (t - s) Phi) against unit input: trapezoid on the
    # grid must match the closed antiderivative
    grid = TimeGrid(1.0, 512)
    phi = 2.0
    tk = grid.times
    kern = (tk[None, :] * np.exp(1j * (tk[:, None] - tk[None, :]) * phi))[None, ...]
    kern = np.where(tk[None, :, None] >= tk[None, None, :], kern, 0.0)
    from kgmix.contraction_kernels import KernelTable

    tab = KernelTable(kind="D_N", values=kern, index={"qs": np.array([[0, 0, 0]]), "times": tk}, provenance={})
    out = apply_volterra(tab, np.ones((1, 513)), None, s2=0.5, alpha=1.0)
    exact = 1j * tk / phi + 1.0 / phi**2 - np.exp(1j * tk * phi) / phi**2
    assert float(np.abs(out.paths[0] - exact).max()) <= 1e-6


def test_oscillatory_integrator_closed_forms():
    grid = TimeGrid(1.0, 512)
    for phi in (2.0, 64.0, 1024.0):
        got = _oscillatory_volterra(grid.times * 1.0, phi, grid.dt)
        exact = 1j * grid.times / phi + (1 - np.exp(1j * grid.times * phi)) / phi**2
        assert float(np.abs(got - exact).max()) <= 1e-12
    # w(s) = s: two-step integration by parts closed form
    phi = 128.0
    t = grid.times
    ip = 1j * phi
    exact2 = np.exp(ip * t) * (
        -(t**2) * np.exp(-ip * t) / ip
        - 2 * t * np.exp(-ip * t) / ip**2
        - 2 * (np.exp(-ip * t) - 1) / ip**3
    )
    got2 = _oscillatory_volterra(t**2, phi, grid.dt)
    assert float(np.abs(got2 - exact2).max()) <= 1e-8


def test_volterra_ibp_check():
    grid = TimeGrid(1.0, 512)
    w = np.ones(513)
    rep = volterra_ibp_check([2.0**k for k in range(3, 11)], w, np.zeros(513), grid)
    assert isinstance(rep, IbpReport)
    assert abs(rep.slope + 1.0) <= 0.1 and rep.passed
    zero = volterra_ibp_check([16.0], np.zeros(513), np.zeros(513), grid)
    assert zero.sup_values[0] == 0.0
    with pytest.raises(ValueError):
        volterra_ibp_check([1e-12], w, w, grid)


def _small_sample(lam=8, steps=8, seed=5):
    grid = TimeGrid(1.0, steps)
    ens = FieldEnsemble(P12, PROF_HS, grid, lam=lam, master_seed=seed, n_samples=4, mode="exact")
    return ens, ens.sample(0)


def test_realized_kernel_zero_field():
    ens, smp = _small_sample()
    zero = FieldSample(
        sample_index=0,
        modes=smp.modes,
        grid=smp.grid,
        psi={1: np.zeros_like(smp.psi[1]), 2: np.zeros_like(smp.psi[2])},
    )
    cubes, qs, box = realized_kernel_A(P12, PROF_HS, zero, 1, 2, 2, 8, 1.0, 0.5)
    assert np.all(cubes == 0)


def test_realized_kernel_fft_vs_direct():
    ens, smp = _small_sample()
    cubes, qs, box = realized_kernel_A(P12, PROF_HS, smp, 1, 2, 2, 8, 1.0, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(10):
        qi = int(rng.integers(len(qs)))
        n = rng.integers(-10, 11, size=3)
        direct = realized_kernel_A_direct(P12, PROF_HS, smp, 1, 2, 2, 8, 1.0, 0.5, n, qs[qi])
        idx = tuple(((n - qs[qi]) % box).astype(int))
        assert abs(direct - cubes[qi][idx]) <= 1e-12


def test_hs_norm_zero_kernel_and_reference_exponent():
    grid = TimeGrid(1.0, 6)
    ens = FieldEnsemble(P12, PROF_HS, grid, lam=8, master_seed=3, n_samples=2, mode="exact")

    class ZeroEnsemble:
        pass

    est = hs_norm_estimate(ens, s2=0.5, block=(1, 2, 2), n_scale=8)
    assert est.reference_exponent == 6 - 8 * 1.0 + 2 * 0.5 + 3 * 0.1
    assert np.all(est.per_sample > 0)
    # deterministic zero kernel: replace samples by zero fields
    smp = ens.sample(0)
    zero = FieldSample(0, smp.modes, smp.grid, {1: np.zeros_like(smp.psi[1]), 2: np.zeros_like(smp.psi[2])})
    cubes, _, box = realized_kernel_A(P12, PROF_HS, zero, 1, 2, 2, 8, 1.0, 0.5)
    assert float(np.abs(cubes).max()) == 0.0


def test_m21_zero_lag_and_reorder():
    assert multiplier_M21(P12, PROF, (2, 0, 0), 16, 0.5, 0.5)[0] == 0.0
    a, _ = multiplier_M21(P12, PROF, (2, 0, 0), 16, 1.0, 0.5)
    b, _ = multiplier_M21(P12, PROF, (2, 0, 0), 16, 1.0, 0.5, term_order="lex")
    c, _ = multiplier_M21(P12, PROF, (2, 0, 0), 16, 1.0, 0.5, term_order="radius")
    assert abs(a - b) <= 1e-10 * abs(a)
    assert abs(a - c) <= 1e-10 * abs(a)


def test_m21_abs_slope():
    vals = [multiplier_M21(P12, PROF, (2, 0, 0), m, 1.0, 0.5)[1] for m in (8, 16, 32)]
    slope = float(np.polyfit(np.log2([8, 16, 32]), np.log2(vals), 1)[0])
    assert abs(slope - (3 - 3 * P12.alpha)) <= 0.4


def test_k21_zero_interval_and_slope():
    vals, total = integrated_kernel_K21(P12, PROF, (2, 0, 0), 0.6, 0.6, [8, 16])
    assert total == 0.0
    grid = TimeGrid(1.0, 256)
    sups = {}
    for m in (8, 16, 32):
        best = 0.0
        for t in (0.5, 1.0):
            kk = k21_kernel_on_grid(P12, PROF, (2, 0, 0), t, grid, [m])
            best = max(best, float(np.abs(kk).max()))
        sups[m] = best
    slope = float(np.polyfit(np.log2([8, 16, 32]), np.log2([sups[m] for m in (8, 16, 32)]), 1)[0])
    assert abs(slope - (3 - 4 * P12.alpha)) <= 0.4


def test_k21_grid_vs_quadrature():
    grid = TimeGrid(1.0, 512)
    kk = k21_kernel_on_grid(P12, PROF, (2, 0, 0), 1.0, grid, [8])
    u = grid.times[128]
    vals, total = integrated_kernel_K21(P12, PROF, (2, 0, 0), 1.0, float(u), [8], quad_steps=512)
    assert math.isclose(kk[128], total, rel_tol=5e-3, abs_tol=1e-9)
