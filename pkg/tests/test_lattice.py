"""Shell enumeration and the deterministic lattice audits."""

import math

import numpy as np
import pytest

from kgmix.dispersion import DispersionParams, norm_sq, omega
from kgmix.lattice import (
    CutoffProfile,
    annulus_points,
    ball_points,
    dyadic_scale,
    enumerate_shell,
    low_output_gap_audit,
    phase_gap_audit,
    phase_layer_count,
    same_speed_contrast,
)

P12 = DispersionParams(1.0, 1.0, 2.0)
PROF = CutoffProfile()


def test_enumerate_shell_exact_count_at_scale_one():
    prof = CutoffProfile(a0=0.5, a1=2.0)
    shell = enumerate_shell(prof, 1)
    # |l|^2 in {1, 2, 3, 4}: 6 + 12 + 8 + 6 lattice points
    assert len(shell) == 32
    counts = np.bincount(norm_sq(shell.points))
    assert counts[1] == 6 and counts[2] == 12 and counts[3] == 8 and counts[4] == 6


def test_shell_closed_under_negation():
    for n in (2, 4, 8):
        pts = {tuple(p) for p in enumerate_shell(PROF, n).points}
        assert all(tuple(-np.array(p)) in pts for p in pts)


def test_shell_count_matches_annulus_volume():
    prof = CutoffProfile(a0=0.5, a1=1.0)
    shell = enumerate_shell(prof, 32)
    vol = 4 * math.pi / 3 * (1.0**3 - 0.5**3) * 32**3
    assert 0.8 <= len(shell) / vol <= 1.2


def test_shell_scale_validation():
    with pytest.raises(ValueError):
        enumerate_shell(PROF, 12)
    with pytest.raises(ValueError):
        enumerate_shell(CutoffProfile(pi_cut=8), 32)


def test_dyadic_scale_values():
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [8, 0, 0]])
    # gauge values 1, sqrt2, sqrt5, sqrt10, sqrt65 -> scales 1, 1, 2, 2, 8
    assert dyadic_scale(pts).tolist() == [1, 1, 2, 2, 8]


def test_chi_res_octave_invariant():
    prof = CutoffProfile(a0=0.5, a1=1.0)
    rng = np.random.default_rng(3)
    m = rng.integers(-40, 41, size=(500, 3))
    r = rng.integers(-40, 41, size=(500, 3))
    mask = prof.chi_res(m, r)
    gm = np.sqrt(1.0 + norm_sq(m))
    gr = np.sqrt(1.0 + norm_sq(r))
    ratio = np.maximum(gm, gr) / np.minimum(gm, gr)
    assert np.all(ratio[mask] <= 2 * prof.a1 / prof.a0 + 1e-12)


def test_phase_gap_audit_reference_values():
    """Brute-force minimum for the (1;2) block at N = 16.

    The enumerated minimizer is the axis configuration l = (-8,0,0),
    q = (-4,0,0); its phase is recomputed in closed form as an independent
    check of the brute-force scan.
    """
    g16 = phase_gap_audit(P12, PROF, 1, 2, 16)
    ref = math.sqrt(1 + 4 * 64) - math.sqrt(1 + 144)  # omega_2(l) - omega_1(l+q)
    assert math.isclose(g16.min_abs_phase, ref, rel_tol=1e-13)
    assert g16.argmin_l in ((-8, 0, 0), (0, -8, 0), (0, 0, -8), (8, 0, 0), (0, 8, 0), (0, 0, 8))
    assert 0.4 <= g16.gap_ratio <= 1.1

    ratios = [phase_gap_audit(P12, PROF, 1, 2, n).gap_ratio for n in (8, 16, 32)]
    assert all(b >= a for a, b in zip(ratios, ratios[1:]))


def test_phase_gap_audit_degenerate_speeds():
    p_deg = DispersionParams(1.0, 1.5, 1.5)
    g = phase_gap_audit(p_deg, PROF, 1, 2, 16)
    assert g.min_abs_phase == 0.0
    assert g.argmin_q == (0, 0, 0)
    assert not g.passed


def test_phase_gap_audit_rejects_same_color():
    with pytest.raises(ValueError):
        phase_gap_audit(P12, PROF, 1, 1, 16)


def test_phase_gap_parity():
    # |phase| is invariant under simultaneous negation of both arguments
    rng = np.random.default_rng(8)
    l = rng.integers(-16, 17, size=(200, 3))
    q = rng.integers(-3, 4, size=(200, 3))
    a = np.abs(omega(P12, 1, q + l) - omega(P12, 2, l))
    b = np.abs(omega(P12, 1, -q - l) - omega(P12, 2, -l))
    assert np.array_equal(a, b)


def test_same_speed_contrast_small_and_bitwise():
    rep1 = same_speed_contrast(P12, PROF, 1, [8, 16, 32])
    rep2 = same_speed_contrast(P12, PROF, 1, [8, 16, 32])
    assert rep1.max_values == rep2.max_values  # bitwise reproducible
    assert rep1.slope <= rep1.reference + 0.1
    # q = 0 contributes exactly zero to the same-speed difference
    assert float(omega(P12, 1, (5, 3, 1)) - omega(P12, 1, (5, 3, 1))) == 0.0


def test_phase_layer_count_saturation_and_monotone():
    n = (2, 0, 0)
    sigma = (1, 1, -1)
    lo, hi = PROF.shell_radii(8)
    pts = annulus_points(lo, hi)
    other = np.asarray(n)[None, :] - pts
    ns_o = norm_sq(other).astype(float)
    region = int(
        np.count_nonzero((ns_o >= lo * lo - 1e-12) & (ns_o <= hi * hi + 1e-12))
    )
    big = phase_layer_count(P12, PROF, 1, sigma, n, 8, 1e9)
    assert big == region
    counts = [phase_layer_count(P12, PROF, 1, sigma, n, 8, lvl) for lvl in (1, 2, 4, 8, 16, 32)]
    assert all(b >= a for a, b in zip(counts, counts[1:]))


def test_phase_layer_count_swapped_enumeration():
    for sigma in ((1, 1, -1), (-1, 1, -1), (1, -1, 1)):
        a = phase_layer_count(P12, PROF, 1, sigma, (2, 0, 0), 16, 4.0)
        b = phase_layer_count(
            P12, PROF, 1, sigma, (2, 0, 0), 16, 4.0, enumeration="n_minus_k"
        )
        assert a == b


def test_phase_layer_count_bound():
    worst = 0.0
    for m in (8, 16):
        for lvl in (1, 4, 16, 64):
            for sigma in ((1, 1, -1), (-1, 1, 1), (1, 1, 1)):
                c = phase_layer_count(P12, PROF, 1, sigma, (1, 0, 0), m, lvl)
                worst = max(worst, c / (m**2 + m ** (3 - 1.0) * lvl))
    assert worst <= 8.0


def test_low_output_gap_audit():
    rep = low_output_gap_audit(P12, PROF, 1, (1, 0, 0), 32, c0=8.0)
    assert rep.passed
    assert rep.min_abs_phase >= 0.25 * 32  # dominated by |c1-c2| M^alpha
    # same-sign branches clear twice the minimal dispersion value
    assert rep.branch_minima[(1, 1, 1)] >= 2.0
    assert rep.branch_minima[(-1, 1, 1)] >= 2.0


def test_low_output_gap_degenerate():
    p_deg = DispersionParams(1.0, 1.0, 1.0)
    rep = low_output_gap_audit(p_deg, PROF, 1, (1, 0, 0), 32, c0=8.0)
    assert not rep.passed
    assert rep.min_abs_phase < 1.0  # O(M^(alpha-1) <n> + M^-alpha)


def test_low_output_gap_precondition_names_constant():
    with pytest.raises(ValueError, match="C0=8"):
        low_output_gap_audit(P12, PROF, 1, (4, 4, 4), 32, c0=8.0)


def test_ball_points_lexicographic_and_radius():
    pts = ball_points(2.5)
    assert np.all(norm_sq(pts) <= 6)
    assert len(pts) == len({tuple(p) for p in pts})
