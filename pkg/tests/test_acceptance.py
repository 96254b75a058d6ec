"""Acceptance suite: one test per primary criterion.

Each criterion runs at its stated scale and tolerance through the same
experiment runners the CLI exposes, and prints a PASS/FAIL line.  Default
configuration: alpha = 1, speeds (1, 2), horizon 1 (0.25 for the fixed
point), cutoffs <= 16 for convolution-based audits, seeded Monte Carlo.
"""

import math
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from kgmix.dispersion import DispersionParams, omega
from kgmix.gaussian_lift import covariance_sigma
from kgmix.experiments import (
    run_hs_audit,
    run_kernel_audit,
    run_layer_count,
    run_lift_exponents,
    run_named_experiment,
    run_phase_audit,
    run_picard,
    run_wick_audit,
    run_window_scan,
)

SEED = 20250811
BASE = {"alpha": 1.0, "c1": 1.0, "c2": 2.0, "seed": SEED}


def _emit(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}".rstrip())


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def phase_report(outdir):
    return run_phase_audit(dict(BASE), outdir / "phase")


@pytest.fixture(scope="module")
def kernel_report(outdir):
    return run_kernel_audit(dict(BASE), outdir / "kernel")


@pytest.fixture(scope="module")
def hs_report(outdir):
    return run_hs_audit(dict(BASE), outdir / "hs")


def test_phase_gap(phase_report):
    rep = phase_report
    ok = (
        rep.passes["gap_ratio_band"]
        and rep.passes["gap_ratio_nondecreasing"]
        and rep.passes["degenerate_reports_failure"]
    )
    _emit(
        "phase gap",
        ok,
        f"ratios={[round(r, 3) for r in rep.measured['gap_ratios']]} "
        f"N0={rep.measured['gap_threshold_scale_n0']}",
    )
    assert rep.passes["gap_ratio_band"]
    assert rep.passes["gap_ratio_nondecreasing"]
    assert rep.passes["degenerate_reports_failure"]


def test_same_speed_contrast(phase_report):
    rep = phase_report
    _emit(
        "same-speed contrast",
        rep.passes["contrast_slope"],
        f"slope={rep.measured['contrast_slope']:.4f} ref={rep.references['contrast_slope']}",
    )
    assert rep.passes["contrast_slope"]


def test_layer_counts(outdir):
    rep = run_layer_count(dict(BASE), outdir / "layer")
    _emit(
        "layer counts",
        rep.passes["layer_count_uniform"],
        f"worst ratio={rep.measured['worst_count_ratio']:.3f} (bound 8)",
    )
    assert rep.passes["layer_count_uniform"]
    assert rep.passes["double_enumeration"]
    assert rep.passes["low_output_gap"]


def test_covariance_closed_form():
    params = DispersionParams(**{k: BASE[k] for k in ("alpha", "c1", "c2")})
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(1000):
        l = rng.integers(-8, 9, size=3)
        s = rng.uniform(0.01, 1.0)
        t = rng.uniform(s, 1.0)
        color = int(rng.integers(1, 3))
        w = float(omega(params, color, l))
        ref, _ = quad(
            lambda tau: math.sin((s - tau) * w) * math.sin((t - tau) * w) / w**2,
            0.0,
            s,
            limit=400,
            epsabs=1e-13,
            epsrel=1e-13,
        )
        got = covariance_sigma(params, color, l, s, t).sigma
        if abs(ref) > 1e-13:
            worst = max(worst, abs(got - ref) / abs(ref))
    _emit("covariance closed form", worst <= 1e-8, f"worst rel err={worst:.2e}")
    assert worst <= 1e-8


def test_lift_exponents(outdir):
    rep = run_lift_exponents(dict(BASE, samples=200), outdir / "lift")
    ok = all(
        rep.passes[k] for k in ("psi1_slope", "psi2_slope", "theta_slope", "V1_slope")
    )
    _emit(
        "lift exponents",
        ok,
        f"psi={rep.measured['psi1_slope']:.3f} theta={rep.measured['theta_slope']:.3f} "
        f"V={rep.measured['V1_slope']:.3f}",
    )
    assert rep.passes["psi1_slope"] and rep.passes["psi2_slope"]
    assert rep.passes["theta_slope"]
    assert rep.passes["V1_slope"]


def test_volterra(kernel_report):
    rep = kernel_report
    ok = rep.passes["ibp_slope"] and rep.passes["volterra_dyadic_ratio"]
    _emit(
        "volterra",
        ok,
        f"ibp slope={rep.measured['ibp_slope']:.4f}, "
        f"sup ratios over {{8,16,32}} vs 3-4a",
    )
    assert rep.passes["ibp_slope"]
    assert rep.passes["volterra_dyadic_ratio"]
    assert rep.passes["remainder_bound"]
    assert rep.passes["reorder_agreement"]


def test_hs_fluctuation_shell(hs_report):
    rep = hs_report
    _emit(
        "hs fluctuation shell",
        rep.passes["hs_slope"],
        f"slope={rep.measured['hs_slope']:.3f} ref={rep.references['hs_slope']:.2f} +-0.5",
    )
    assert rep.passes["hs_slope"]
    assert rep.passes["subtraction_reduces_norm"]


def test_color_speed_centering(hs_report):
    rep = hs_report
    ok = (
        rep.passes["cross_color_centered"]
        and rep.passes["same_color_centered"]
        and rep.passes["diagonal_matches_D"]
    )
    _emit(
        "color-speed centering",
        ok,
        f"z_cross={rep.measured['z_cross_color']:.2f} "
        f"z_same={rep.measured['z_same_color_centered']:.2f} "
        f"z_diag={rep.measured['z_diagonal_vs_D']:.2f} (gate 4)",
    )
    assert ok


def test_contraction_kernels(kernel_report):
    rep = kernel_report
    ok = rep.passes["m21_slope"] and rep.passes["k21_slope"] and rep.passes["k21_tail"]
    _emit(
        "contraction kernels",
        ok,
        f"m21={rep.measured['m21_abs_slope']:.3f} (ref 0), "
        f"k21={rep.measured['k21_shell_slope']:.3f} (ref -1)",
    )
    assert rep.passes["m21_slope"]
    assert rep.passes["k21_slope"]
    assert rep.passes["k21_tail"]


def test_wick_decomposition(outdir):
    rep = run_wick_audit(dict(BASE), outdir / "wick")
    ok = all(
        rep.passes[k]
        for k in (
            "ito_isometry",
            "covariance_check_a",
            "orthogonality_b",
            "orthogonality_c",
            "gamma_mean_zero",
            "chaos_ordering",
        )
    )
    _emit(
        "wick decomposition",
        ok,
        f"iso z={max(rep.measured['isometry_z']):.2f} "
        f"gamma_slope={rep.measured['gamma_slope']:.2f} c1_slope={rep.measured['c1_slope']:.2f}",
    )
    assert rep.passes["ito_isometry"]
    assert rep.passes["covariance_check_a"]
    assert rep.passes["orthogonality_b"]
    assert rep.passes["orthogonality_c"]
    assert rep.passes["gamma_mean_zero"]
    assert rep.passes["chaos_ordering"]
    assert rep.passes["gamma_slope_upper"]
    assert rep.passes["c1_slope_band"]


def test_parameter_window(outdir):
    rep = run_window_scan(dict(BASE), outdir / "window")
    ok = rep.passes["endpoint_witness"] and rep.passes["scan_0.92"] and rep.passes["scan_0.95"]
    _emit("parameter window", ok, "endpoint witness + scans at 0.92 / 0.95")
    assert rep.passes["endpoint_witness"]
    assert rep.passes["scan_0.92"]
    assert rep.passes["scan_0.95"]


def test_picard(outdir):
    rep = run_picard(dict(BASE, horizon=0.25), outdir / "picard")
    ok = (
        rep.passes["decoupled_bitwise"]
        and rep.passes["contraction_monotone"]
        and rep.passes["cutoff_diffs_decreasing"]
        and rep.passes["grid_refinement"]
    )
    _emit(
        "picard",
        ok,
        f"diffs={['%.1e' % d for d in rep.measured['diffs']]} "
        f"cutoff={['%.2e' % d for d in rep.measured['cutoff_mean_diffs']]}",
    )
    assert rep.passes["decoupled_bitwise"]
    assert rep.passes["contraction_monotone"]
    assert rep.passes["cutoff_diffs_decreasing"]
    assert rep.passes["grid_refinement"]


def test_determinism(outdir):
    cfg = dict(BASE)
    csvs = []
    for run, workers in (("d1", 1), ("d2", 4)):
        d = outdir / run
        rep = run_named_experiment("phase-audit", dict(cfg, workers=workers), d)
        assert rep.passed
        csvs.append((d / "phase_audit.csv").read_bytes())
    ok = csvs[0] == csvs[1]
    _emit("determinism", ok, "byte-identical CSV across reruns and worker counts")
    assert ok
