"""Covariance closed form, sampling laws, quadratic/Picard objects, fits."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from kgmix.dispersion import DispersionParams, norm_sq, omega
from kgmix.lattice import CutoffProfile, ball_points
from kgmix.gaussian_lift import (
    CovarianceError,
    FieldEnsemble,
    NoisePath,
    TimeGrid,
    covariance_sigma,
    covariance_vector,
    _sigma_gram,
    first_picard_V,
    fit_exponent,
    product_slices,
    psi_shell_moment_direct,
    shell_second_moment,
    theta_coefficients,
    theta_cube,
)

P12 = DispersionParams(1.0, 1.0, 2.0)
PROF = CutoffProfile()
RNG = np.random.default_rng(42)


def _mode_rows(ens):
    return {tuple(m): r for r, m in enumerate(map(tuple, ens.modes))}


# -- covariance --------------------------------------------------------------


def test_covariance_zero_start():
    for t in (0.1, 0.7, 1.0):
        assert covariance_sigma(P12, 1, (3, 1, 0), 0.0, t).sigma == 0.0


def test_covariance_equal_times_formula():
    w = float(omega(P12, 2, (2, 1, 0)))
    t = 0.8
    ev = covariance_sigma(P12, 2, (2, 1, 0), t, t)
    ref = t / (2 * w**2) - math.sin(2 * w * t) / (4 * w**3)
    assert math.isclose(ev.sigma, ref, rel_tol=1e-14)
    assert ev.sigma == ev.sigma0 + ev.sigma_r


def test_covariance_swap_and_remainder_bound():
    a = covariance_sigma(P12, 1, (4, 0, 0), 0.9, 0.3)
    b = covariance_sigma(P12, 1, (4, 0, 0), 0.3, 0.9)
    assert a.swapped and not b.swapped
    assert a.sigma == b.sigma
    for _ in range(200):
        l = RNG.integers(-10, 11, size=3)
        s = RNG.uniform(0, 1)
        t = RNG.uniform(s, 1)
        ev = covariance_sigma(P12, 2, l, s, t)
        w = float(omega(P12, 2, l))
        assert abs(ev.sigma_r) <= 1.0 / (2 * w**3) + 1e-15


def test_covariance_matches_quadrature():
    worst = 0.0
    for _ in range(150):
        l = RNG.integers(-8, 9, size=3)
        s = RNG.uniform(0.05, 1)
        t = RNG.uniform(s, 1)
        color = int(RNG.integers(1, 3))
        w = float(omega(P12, color, l))
        ref, _ = quad(
            lambda tau: math.sin((s - tau) * w) * math.sin((t - tau) * w) / w**2,
            0.0,
            s,
            limit=400,
            epsabs=1e-13,
            epsrel=1e-13,
        )
        got = covariance_sigma(P12, color, l, s, t).sigma
        if abs(ref) > 1e-13:
            worst = max(worst, abs(got - ref) / abs(ref))
    assert worst <= 1e-8


def test_gram_matrix_psd():
    times = TimeGrid(1.0, 12).times[1:]
    for nsq in (1, 5, 64):
        w = float(omega(P12, 1, (int(math.isqrt(nsq)), 0, 0)))
        g = _sigma_gram(w, times)
        assert np.allclose(g, g.T)
        eig = np.linalg.eigvalsh(g)
        assert eig.min() >= -1e-12 * eig.max()


# -- sampling ----------------------------------------------------------------


def test_exact_mode_hermitian_and_variance():
    grid = TimeGrid(1.0, 8)
    ens = FieldEnsemble(P12, PROF, grid, lam=4, master_seed=7, n_samples=300, mode="exact")
    rows = _mode_rows(ens)
    smp = ens.sample(0)
    for m in [(1, 2, 0), (0, 0, 3), (-2, 1, 1)]:
        a = smp.psi[2][rows[m]]
        b = smp.psi[2][rows[tuple(-np.array(m))]]
        assert np.array_equal(a, np.conj(b))
    vals = np.array([ens.sample(s).psi[1][rows[(2, 0, 0)], -1] for s in range(300)])
    sig = covariance_sigma(P12, 1, (2, 0, 0), 1.0, 1.0).sigma
    z = abs(np.mean(np.abs(vals) ** 2) - sig) / (np.std(np.abs(vals) ** 2) / math.sqrt(300))
    assert z <= 4.0


def test_exact_mode_marginal_law_ks():
    # pre-registered modes and seed; standardized marginals vs N(0,1)
    grid = TimeGrid(1.0, 16)
    ens = FieldEnsemble(P12, PROF, grid, lam=2, master_seed=11, n_samples=400, mode="exact")
    rows = _mode_rows(ens)
    for mode in [(1, 0, 0), (1, 1, 0)]:
        vals = np.array([ens.sample(s).psi[1][rows[mode], -1] for s in range(400)])
        sig = covariance_sigma(P12, 1, mode, 1.0, 1.0).sigma
        assert kstest(vals.real / math.sqrt(sig / 2), "norm").pvalue > 0.01
        assert kstest(vals.imag / math.sqrt(sig / 2), "norm").pvalue > 0.01


def test_cross_color_covariance_vanishes():
    grid = TimeGrid(1.0, 8)
    ens = FieldEnsemble(P12, PROF, grid, lam=3, master_seed=13, n_samples=400, mode="exact")
    rows = _mode_rows(ens)
    for _ in range(20):
        k = tuple(ens.modes[RNG.integers(len(ens.modes))])
        l = tuple(ens.modes[RNG.integers(len(ens.modes))])
        ks, lt = int(RNG.integers(1, 9)), int(RNG.integers(1, 9))
        prod = np.array(
            [
                ens.sample(s).psi[1][rows[k], ks] * ens.sample(s).psi[2][rows[l], lt]
                for s in range(120)
            ]
        )
        se = prod.std() / math.sqrt(len(prod))
        assert abs(prod.mean()) <= 4 * max(se, 1e-12)


def test_increment_mode_bias_constant():
    # the midpoint discrete variance deviates from the closed form by
    # O(dt) * variance with a small constant (analytic, no Monte Carlo)
    grid = TimeGrid(1.0, 128)
    worst = 0.0
    for nsq, color in ((1, 1), (16, 2), (4, 1)):
        w = float(np.sqrt(1 + P12.speed(color) ** 2 * nsq))
        disc = float(np.sum(np.sin((1.0 - grid.midpoints) * w) ** 2 / w**2 * grid.dt))
        cont = covariance_sigma(P12, color, (int(math.isqrt(nsq)), 0, 0), 1.0, 1.0).sigma
        worst = max(worst, abs(disc - cont) / (grid.dt * cont))
    assert worst <= 1.0  # reported constant: well below one at dt*omega <= 0.1


def test_increment_mode_resolution_guard():
    with pytest.raises(ValueError, match="increment mode"):
        FieldEnsemble(P12, PROF, TimeGrid(1.0, 8), lam=8, master_seed=0, n_samples=1, mode="increment")


def test_noise_hermitian_and_cutoff_stability():
    grid = TimeGrid(1.0, 64)
    noise4 = NoisePath(grid=grid, lam=4, master_seed=3, sample_index=5)
    noise8 = NoisePath(grid=grid, lam=8, master_seed=3, sample_index=5)
    modes = np.array([[1, 0, 0], [-1, 0, 0], [0, 0, 0], [2, -1, 3], [-2, 1, -3]])
    inc4 = noise4.increments(1, modes)
    inc8 = noise8.increments(1, modes)
    # runs at different cutoffs share noise on common modes
    assert np.array_equal(inc4, inc8)
    assert np.array_equal(inc4[0], np.conj(inc4[1]))
    assert np.array_equal(inc4[3], np.conj(inc4[4]))
    assert np.all(inc4[2].imag == 0.0)
    # colors are distinct substreams
    assert not np.allclose(inc4, noise4.increments(2, modes))


def test_fine_factor_aggregates_one_path():
    coarse = NoisePath(grid=TimeGrid(1.0, 32), lam=2, master_seed=9, fine_factor=2)
    fine = NoisePath(grid=TimeGrid(1.0, 64), lam=2, master_seed=9, fine_factor=1)
    modes = np.array([[1, 1, 0]])
    a = coarse.increments(1, modes)[0]
    b = fine.increments(1, modes)[0]
    assert np.allclose(a, b[0::2] + b[1::2], rtol=0, atol=1e-15)


# -- quadratic object --------------------------------------------------------


def test_theta_single_mode_cutoff_zero():
    grid = TimeGrid(1.0, 4)
    ens = FieldEnsemble(P12, PROF, grid, lam=0, master_seed=2, n_samples=3, mode="exact")
    smp = ens.sample(0)
    cube = theta_cube(ens, smp, 4)
    assert cube.shape[0] >= 1
    ref = smp.psi[1][0, 4] * smp.psi[2][0, 4]
    assert np.isclose(cube[0, 0, 0, 0], ref)
    nz = np.abs(cube[..., 0]) > 1e-14
    assert nz.sum() == 1


def test_theta_mean_and_second_moment():
    grid = TimeGrid(1.0, 6)
    ens = FieldEnsemble(P12, PROF, grid, lam=4, master_seed=21, n_samples=400, mode="exact")
    n = np.array([2, 1, 0])
    vals = theta_coefficients(ens, n, 1.0)
    se = vals.std() / math.sqrt(len(vals))
    assert abs(vals.mean()) <= 4 * se
    kpts = ball_points(4)
    lpts = n[None, :] - kpts
    keep = norm_sq(lpts) <= 16
    ref = float(
        np.sum(
            covariance_vector(P12, 1, norm_sq(kpts[keep]), 1.0)
            * covariance_vector(P12, 2, norm_sq(lpts[keep]), 1.0)
        )
    )
    m2 = np.abs(vals) ** 2
    z = abs(m2.mean() - ref) / (m2.std() / math.sqrt(len(vals)))
    assert z <= 4.0


def test_theta_out_of_range_rejected():
    grid = TimeGrid(1.0, 4)
    ens = FieldEnsemble(P12, PROF, grid, lam=2, master_seed=1, n_samples=1, mode="exact")
    with pytest.raises(ValueError):
        theta_coefficients(ens, (9, 0, 0), 1.0)


# -- first Picard object ------------------------------------------------------


def test_first_picard_zero_at_origin_and_refinement():
    grid = TimeGrid(1.0, 16)
    ens = FieldEnsemble(P12, PROF, grid, lam=2, master_seed=5, n_samples=1, mode="exact")
    smp = ens.sample(0)
    pts = np.array([[1, 0, 0], [0, 2, 0]])
    v, dv = first_picard_V(ens, smp, 1, out_modes=pts)
    assert np.all(v[:, 0] == 0) and np.all(dv[:, 0] == 0)

    # Richardson refinement on a smooth synthetic mode: the composite
    # trapezoid Duhamel quadrature converges at second order
    w = float(omega(P12, 1, (2, 0, 0)))

    def v_at(steps):
        g = TimeGrid(1.0, steps)
        src = np.sin(3.0 * g.times) + 0.5 * np.cos(g.times)  # smooth test mode
        kern = np.sin((1.0 - g.times) * w) / w
        trap = np.full(steps + 1, g.dt)
        trap[0] *= 0.5
        trap[-1] *= 0.5
        return float(np.sum(kern * src * trap))

    exact_err = {m: abs(v_at(m) - v_at(4096)) for m in (32, 64, 128)}
    r1 = exact_err[32] / exact_err[64]
    r2 = exact_err[64] / exact_err[128]
    assert 3.0 <= r1 <= 5.0
    assert 3.0 <= r2 <= 5.0


# -- shell statistics ---------------------------------------------------------


def test_shell_second_moment_zero_field_and_psi():
    grid = TimeGrid(1.0, 6)
    ens = FieldEnsemble(P12, PROF, grid, lam=8, master_seed=99, n_samples=120, mode="exact")

    def zero_provider(e, s, pts, t_index):
        return np.zeros(len(pts), dtype=complex)

    sm0 = shell_second_moment(ens, "zero", 4, 1.0, provider=zero_provider)
    assert sm0.mean_sq == 0.0 and sm0.se == 0.0

    sm = shell_second_moment(ens, "psi1", 8, 1.0)
    from kgmix.lattice import enumerate_shell

    pts = enumerate_shell(PROF, 8).points
    ref = float(np.mean(covariance_vector(P12, 1, norm_sq(pts), 1.0)))
    assert abs(sm.mean_sq - ref) <= 4 * sm.se


def test_psi_direct_moment_matches_covariance():
    sm = psi_shell_moment_direct(P12, PROF, 2, 16, 1.0, master_seed=31, n_samples=200)
    from kgmix.lattice import enumerate_shell

    pts = enumerate_shell(PROF, 16).points
    ref = float(np.mean(covariance_vector(P12, 2, norm_sq(pts), 1.0)))
    assert abs(sm.mean_sq - ref) <= 4 * sm.se


def test_theta_dyadic_ratio():
    # E|theta(n)|^2 ratio between shells 8 and 16 tracks 2^(3 - 4 alpha)
    grid = TimeGrid(1.0, 1)
    ens = FieldEnsemble(P12, PROF, grid, lam=32, master_seed=17, n_samples=150, mode="exact")
    from kgmix.lattice import enumerate_shell

    vals = {}
    for n_scale in (8, 16):
        pts = enumerate_shell(PROF, n_scale).points
        per = []
        for s in range(150):
            smp = ens.sample(s)
            th = product_slices(ens, smp, np.array([1]), pts, real_dtype=np.float32)
            per.append(float(np.mean(np.abs(th[:, 0]) ** 2)))
        vals[n_scale] = (np.mean(per), np.std(per) / math.sqrt(len(per)))
    ratio = math.log2(vals[16][0] / vals[8][0])
    se = (vals[16][1] / vals[16][0] + vals[8][1] / vals[8][0]) / math.log(2)
    assert abs(ratio - (3 - 4 * P12.alpha)) <= max(4 * se, 0.35)


# -- exponent fits ------------------------------------------------------------


def test_fit_exponent_exact_power():
    fit = fit_exponent([(4, 2.5 * 4**-1.25, 0.0), (8, 2.5 * 8**-1.25, 0.0), (16, 2.5 * 16**-1.25, 0.0)])
    assert abs(fit.slope + 1.25) <= 1e-12


def test_fit_exponent_drops_nonpositive():
    fit = fit_exponent(
        [(4, 1.0, 0.1), (8, 0.5, 0.05), (16, 0.25, 0.02), (32, -1.0, 0.1)]
    )
    assert fit.dropped == (32,)
    assert abs(fit.slope + 1.0) <= 1e-9
    with pytest.raises(ValueError):
        fit_exponent([(4, 1.0, 0.0), (8, -1.0, 0.0), (16, 1.0, 0.0)])


def test_seed_determinism_bitwise():
    grid = TimeGrid(1.0, 8)
    a = FieldEnsemble(P12, PROF, grid, lam=3, master_seed=55, n_samples=2, mode="exact")
    b = FieldEnsemble(P12, PROF, grid, lam=3, master_seed=55, n_samples=2, mode="exact")
    assert np.array_equal(a.sample(1).psi[1], b.sample(1).psi[1])
    assert np.array_equal(a.sample(1).psi[2], b.sample(1).psi[2])
