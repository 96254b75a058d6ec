"""Resonant cubic symbol and its first-chaos contraction on shared noise.

For color-1 output the cubic symbol is the resonant product of the first
Picard object of the opposite color with the linear field,

    gamma_1(n, t) = sum_{m+r=n} chi_res(m, r) V_2(m, t) psi_1(r, t),

and its colored Wick decomposition cuts out exactly one channel: the two
color-1 Gaussian factors pair, leaving a first-chaos Volterra term driven
by the remaining color-2 noise,

    C_1(n, t) = sum_l K21(n; t, mid_l) d beta_2(n, l)        (discrete Ito).

Everything here is built on increment-mode samples so that gamma and C_1
share one Brownian path.  The contraction kernel K21 is assembled from the
*discrete* covariance of the increment construction (midpoint Riemann sum)
with the same trapezoid weights as the first Picard quadrature; with that
convention the decomposition gamma - C_1 is exactly centered third chaos
for the discrete model, and the orthogonality audits measure pure Monte
Carlo noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.signal

from . import _rng
from .dispersion import omega_from_norm_sq, norm_sq
from .gaussian_lift import (
    FieldEnsemble,
    _jackknife_se,
    _half_embed,
    _extract_spectrum,
    product_slices,
)
from .lattice import ball_points, dyadic_scale

__all__ = [
    "ResonantCubicSampler",
    "gamma_resonant_samples",
    "contraction_C1_samples",
    "decomposition_audit",
    "WickAuditReport",
    "CouplingError",
]


class CouplingError(RuntimeError):
    """Raised when gamma and C_1 are not built on the same noise."""


class ResonantCubicSampler:
    """Per-sample construction of gamma_1 and C_1 on one shared noise path.

    Wraps an increment-mode ensemble; all derived quantities are pure
    functions of (master seed, sample index), and the contraction kernels
    are deterministic tables shared across samples.
    """

    def __init__(
        self,
        ensemble: FieldEnsemble,
        v2_radius: Optional[int] = None,
        real_dtype=np.float64,
        quad_stride: int = 1,
    ):
        if ensemble.mode != "increment":
            raise ValueError(
                "resonant cubic audits need increment-mode samples "
                "(shared Brownian path); exact mode carries no increments"
            )
        if ensemble.grid.n_steps % quad_stride != 0:
            raise ValueError("quad_stride must divide the step count")
        if quad_stride != 1:
            # thinning breaks the exact correspondence with the discrete
            # contraction kernel; only slope audits may use it
            pass
        self.ensemble = ensemble
        self.lam = ensemble.lam
        self.grid = ensemble.grid
        self.params = ensemble.params
        self.profile = ensemble.profile
        self.real_dtype = real_dtype
        self.quad_stride = int(quad_stride)
        radius = 2 * self.lam if v2_radius is None else min(v2_radius, 2 * self.lam)
        self._theta_modes = ball_points(radius)
        self._m21_cache: Dict[tuple, np.ndarray] = {}
        self._k21_cache: Dict[tuple, np.ndarray] = {}
        self._sigma_disc = self._discrete_sigma_table()

    # -- deterministic kernel tables ----------------------------------------

    def _discrete_sigma_table(self) -> Dict[int, np.ndarray]:
        """sigma_1^disc(r; t_k, T) per radius class of |r| <= lam.

        Exactly the covariance E[psi_1(r, t_k) psi_1(-r, T)] of the
        increment-mode construction: a midpoint Riemann sum of the kernel
        product, evaluated by one causal convolution per radius class.
        """
        grid = self.grid
        m = grid.n_steps
        t_final = grid.times[-1]
        mid = grid.midpoints
        out: Dict[int, np.ndarray] = {}
        for nsq in np.unique(norm_sq(ball_points(self.lam))):
            w = float(omega_from_norm_sq(self.params, 1, float(nsq)))
            a = np.sin((t_final - mid) * w) / w * grid.dt  # K_1(T-mid_j) dt
            kern = np.sin((np.arange(m) + 0.5) * grid.dt * w) / w
            conv = scipy.signal.fftconvolve(a, kern)[:m]
            sig = np.zeros(m + 1)
            sig[1:] = conv
            out[int(nsq)] = sig
        return out

    def _m21_classes(self, n: np.ndarray):
        """(|r|^2 class, outer omega, multiplicity) of the contraction sum.

        The contracted frequency runs over |r| <= lam with |n - r| <= 2 lam
        (the support of the opposite-color Picard factor) under the
        resonant octave window.
        """
        r_pts = ball_points(self.lam)
        m_pts = n[None, :] - r_pts
        keep = norm_sq(m_pts) <= (2 * self.lam) ** 2
        r_pts, m_pts = r_pts[keep], m_pts[keep]
        res = self.profile.chi_res(m_pts, r_pts)
        r_pts, m_pts = r_pts[res], m_pts[res]
        if len(r_pts) == 0:
            return None
        a_sq = norm_sq(m_pts).astype(np.int64)
        b_sq = norm_sq(r_pts).astype(np.int64)
        key = a_sq * (1 << 32) + b_sq
        order = np.argsort(key, kind="stable")
        uniq, start = np.unique(key[order], return_index=True)
        mult = np.diff(np.append(start, len(key))).astype(np.float64)
        return (uniq >> 32).astype(np.int64), (uniq & 0xFFFFFFFF).astype(np.int64), mult

    def m21_disc(self, n) -> np.ndarray:
        """M21(n; T, t_k) on the grid, with the discrete covariance."""
        n = np.asarray(n, dtype=np.int64)
        key = tuple(int(c) for c in n)
        if key in self._m21_cache:
            return self._m21_cache[key]
        grid = self.grid
        t_final = grid.times[-1]
        classes = self._m21_classes(n)
        vals = np.zeros(grid.n_steps + 1)
        if classes is not None:
            a_sq, b_sq, mult = classes
            w_a = omega_from_norm_sq(self.params, 2, a_sq.astype(np.float64))
            kern = np.sin((t_final - grid.times[:, None]) * w_a[None, :]) / w_a[None, :]
            sig = np.stack([self._sigma_disc[int(b)] for b in b_sq], axis=1)
            vals = (kern * sig) @ mult
        self._m21_cache[key] = vals
        return vals

    def k21_disc(self, n) -> np.ndarray:
        """K21(n; T, mid_l): trapezoid of M21 * K_2(t_k - mid_l, n) over t_k > mid_l.

        This is exactly the kernel whose discrete Ito sum against
        d beta_2(n, .) equals the contraction channel of gamma_1.
        """
        n = np.asarray(n, dtype=np.int64)
        key = tuple(int(c) for c in n)
        if key in self._k21_cache:
            return self._k21_cache[key]
        grid = self.grid
        m21 = self.m21_disc(n)
        w_n = float(omega_from_norm_sq(self.params, 2, float(norm_sq(n))))
        tk = grid.times
        mid = grid.midpoints
        trap = np.full(grid.n_steps + 1, grid.dt)
        trap[0] *= 0.5
        trap[-1] *= 0.5
        kern = np.sin((tk[:, None] - mid[None, :]) * w_n) / w_n
        kern[tk[:, None] <= mid[None, :]] = 0.0
        out = (trap * m21) @ kern
        self._k21_cache[key] = out
        return out

    # -- per-sample objects ---------------------------------------------------

    def v2_terminal(self, sample) -> np.ndarray:
        """V_2(m, T) on the sampler's output ball: Duhamel trapezoid of the product.

        `quad_stride` thins the quadrature nodes relative to the path grid
        (trapezoid on every stride-th node); usable by variance audits that
        do not pair the result with the contraction channel.
        """
        grid = self.grid
        stride = self.quad_stride
        sel = np.arange(0, grid.n_steps + 1, stride)
        theta = product_slices(
            self.ensemble,
            sample,
            sel,
            self._theta_modes,
            real_dtype=self.real_dtype,
        )
        w = omega_from_norm_sq(self.params, 2, norm_sq(self._theta_modes))
        t_final = grid.times[-1]
        times = grid.times[sel]
        kern = (np.sin((t_final - times[None, :]) * w[:, None]) / w[:, None])
        trap = np.full(len(sel), grid.dt * stride)
        trap[0] *= 0.5
        trap[-1] *= 0.5
        if self.real_dtype == np.float32:
            kern = (kern * trap).astype(np.float32)
            return np.einsum("mt,mt->m", theta, kern)
        return (theta * kern) @ trap

    def gamma_at_points(self, sample, out_pts: np.ndarray) -> np.ndarray:
        """gamma_1(n, T) at a small point list by direct resonant summation.

        Exact (no convolution grid); requires every |n| <= v2 radius - lam
        reachability, i.e. the sampler's V_2 ball must cover |n| + lam.
        """
        pts = np.asarray(out_pts, dtype=np.int64)
        need = float(np.sqrt(norm_sq(pts).max())) + self.lam
        have = float(np.sqrt(norm_sq(self._theta_modes).max()))
        if need > have + 1e-9:
            raise ValueError("V_2 ball too small for the requested outputs")
        v2 = self.v2_terminal(sample)
        psi1 = sample.psi[1][:, -1]
        row_of = {tuple(m): r for r, m in enumerate(map(tuple, self.ensemble.modes))}
        out = np.empty(len(pts), dtype=np.complex128)
        lam_sq = self.lam**2
        for row, n in enumerate(pts):
            r_pts = n[None, :] - self._theta_modes
            keep = norm_sq(r_pts) <= lam_sq
            m_pts = self._theta_modes[keep]
            r_pts = r_pts[keep]
            res = self.profile.chi_res(m_pts, r_pts)
            m_pts, r_pts = m_pts[res], r_pts[res]
            rows_m = np.asarray([row_of[tuple(p)] for p in r_pts], dtype=np.intp)
            out[row] = np.dot(v2[_rows_in(self._theta_modes, m_pts)], psi1[rows_m])
        return out

    def gamma_terminal(self, sample, out_pts: np.ndarray) -> np.ndarray:
        """gamma_1(n, T): resonant (octave) convolution of V_2 and psi_1."""
        v2 = self.v2_terminal(sample)
        cdtype = np.complex64 if self.real_dtype == np.float32 else np.complex128
        psi1 = sample.psi[1][:, -1].astype(cdtype)
        size = sfft.next_fast_len(2 * 3 * self.lam + 1)
        v_buckets = _bucket_split_pts(self._theta_modes, v2)
        p_buckets = _bucket_split_pts(self.ensemble.modes, psi1)
        p_hat = {
            d: sfft.fftn(_embed_c(pts, vals, size, cdtype), workers=-1)
            for d, (pts, vals) in p_buckets.items()
        }
        acc = None
        for d, (pts, vals) in v_buckets.items():
            allowed = [dd for dd in p_hat if dd in (d // 2, d, 2 * d)]
            if not allowed:
                continue
            v_hat = sfft.fftn(_embed_c(pts, vals, size, cdtype), workers=-1)
            psum = p_hat[allowed[0]].copy()
            for dd in allowed[1:]:
                psum += p_hat[dd]
            acc = v_hat * psum if acc is None else acc + v_hat * psum
        cube = sfft.ifftn(acc, workers=-1)
        pts = np.asarray(out_pts, dtype=np.int64)
        ix, iy, iz = (pts.T % size).astype(np.intp)
        return cube[ix, iy, iz]

    def c1_terminal(self, sample_index: int, out_pts: np.ndarray) -> np.ndarray:
        """C_1(n, T) by the discrete Ito sum of K21 against d beta_2(n, .)."""
        pts = np.asarray(out_pts, dtype=np.int64)
        noise = self.ensemble.noise(sample_index)
        dbeta = noise.increments(2, pts)
        out = np.empty(len(pts), dtype=np.complex128)
        for row, n in enumerate(pts):
            if norm_sq(n) > self.lam**2:
                out[row] = 0.0
                continue
            out[row] = np.dot(self.k21_disc(n), dbeta[row])
        return out

    def c1_variance(self, n) -> float:
        """Exact discrete Ito isometry: sum_l K21(mid_l)^2 dt."""
        k = self.k21_disc(np.asarray(n, dtype=np.int64))
        return float(np.sum(k**2) * self.grid.dt)

    def c1_at_time(self, sample_index: int, n, t: float) -> complex:
        """C_1(n, t) for a grid time t (kernel rebuilt at horizon t)."""
        n = np.asarray(n, dtype=np.int64)
        kt = self.grid.index_of(t)
        if kt == self.grid.n_steps:
            return complex(self.c1_terminal(sample_index, n[None, :])[0])
        raise NotImplementedError("audits evaluate the contraction at t = T")


def _rows_in(table: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Row indices of pts inside a lexicographically ordered point table."""
    keys = (table[:, 0] * (1 << 42) + table[:, 1] * (1 << 21) + table[:, 2]).astype(
        np.int64
    )
    want = (pts[:, 0] * (1 << 42) + pts[:, 1] * (1 << 21) + pts[:, 2]).astype(np.int64)
    order = np.argsort(keys, kind="stable")
    pos = np.searchsorted(keys[order], want)
    return order[pos]


def _bucket_split_pts(pts: np.ndarray, values: np.ndarray):
    scales = dyadic_scale(pts)
    return {
        int(d): (pts[scales == d], values[scales == d]) for d in np.unique(scales)
    }


def _embed_c(pts: np.ndarray, values: np.ndarray, size: int, cdtype=np.complex128) -> np.ndarray:
    cube = np.zeros((size, size, size), dtype=cdtype)
    ix, iy, iz = (pts.T % size).astype(np.intp)
    cube[ix, iy, iz] = values
    return cube


# -- spec-level operations ----------------------------------------------------


def gamma_resonant_samples(
    ensemble: FieldEnsemble, out_pts: np.ndarray, sample_indices: Sequence[int]
) -> np.ndarray:
    """gamma_1(n, T) for each requested sample (increment mode required)."""
    sampler = ResonantCubicSampler(ensemble)
    out = np.empty((len(sample_indices), len(out_pts)), dtype=np.complex128)
    for row, si in enumerate(sample_indices):
        out[row] = sampler.gamma_terminal(ensemble.sample(si), out_pts)
    return out


def contraction_C1_samples(
    ensemble: FieldEnsemble, out_pts: np.ndarray, sample_indices: Sequence[int]
) -> np.ndarray:
    """C_1(n, T) for each requested sample, on the ensemble's own noise."""
    sampler = ResonantCubicSampler(ensemble)
    out = np.empty((len(sample_indices), len(out_pts)), dtype=np.complex128)
    for row, si in enumerate(sample_indices):
        out[row] = sampler.c1_terminal(si, out_pts)
    return out


@dataclass(frozen=True)
class WickAuditReport:
    n_samples: int
    isometry: dict
    covariance_check: dict
    orthogonality_color2: dict
    orthogonality_color1: dict
    passed: bool
    mean_zero: Optional[dict] = None


def decomposition_audit(
    gamma_ensemble: FieldEnsemble,
    c1_ensemble: FieldEnsemble,
    n_samples: int,
    audit_n=((1, 0, 0), (2, 1, 0)),
    functional_times=(0.25, 0.5, 0.75),
    z_gate: float = 4.0,
    mean_zero_pts=None,
    mean_zero_samples: int = 500,
) -> WickAuditReport:
    """Statistical verification of the colored Wick decomposition.

    (a) the covariance of C_1(n, T) with psi_2(n, t') equals the discrete
        quadrature sum over shared increments;
    (b) gamma_1 - C_1 is orthogonal to a pre-registered list of first-chaos
        color-2 functionals psi_2(m, t_k);
    (c) gamma_1 is orthogonal to the matching color-1 functionals.

    With `mean_zero_pts` set, the ensemble mean of gamma_1 on those
    frequencies is additionally tested against zero (using the first
    `mean_zero_samples` realizations).  Refuses to run unless both
    ensembles are literally the same noise (seed, cutoff, grid, mode).
    """
    same = (
        gamma_ensemble.master_seed == c1_ensemble.master_seed
        and gamma_ensemble.lam == c1_ensemble.lam
        and gamma_ensemble.grid == c1_ensemble.grid
        and gamma_ensemble.mode == c1_ensemble.mode
    )
    if not same:
        raise CouplingError(
            "gamma and C_1 must be built on identical noise "
            "(same seed, cutoff, and grid)"
        )
    ens = gamma_ensemble
    audit_pts = np.asarray(audit_n, dtype=np.int64)
    mz_pts = (
        np.zeros((0, 3), dtype=np.int64)
        if mean_zero_pts is None
        else np.asarray(mean_zero_pts, dtype=np.int64)
    )
    gamma_pts = np.concatenate([audit_pts, mz_pts])
    radius = int(np.ceil(np.sqrt(norm_sq(gamma_pts).max()))) + ens.lam
    sampler = ResonantCubicSampler(ens, v2_radius=radius, real_dtype=np.float32)
    grid = ens.grid
    t_final = grid.times[-1]
    t_half = grid.times[grid.n_steps // 2]
    func_idx = [grid.index_of(round(t * t_final, 12)) for t in functional_times]

    n_pts = len(audit_pts)
    gam = np.empty((n_samples, n_pts), dtype=np.complex128)
    mz_count = min(mean_zero_samples, n_samples) if len(mz_pts) else 0
    gam_mz = np.empty((mz_count, len(mz_pts)), dtype=np.complex128)
    c1v = np.empty((n_samples, n_pts), dtype=np.complex128)
    psi2_half = np.empty((n_samples, n_pts), dtype=np.complex128)
    f2 = np.empty((n_samples, n_pts, len(func_idx)), dtype=np.complex128)
    f1 = np.empty((n_samples, n_pts, len(func_idx)), dtype=np.complex128)
    rows = None
    for si in range(n_samples):
        smp = ens.sample(si)
        if rows is None:
            row_of = {tuple(m): r for r, m in enumerate(map(tuple, ens.modes))}
            rows = np.asarray([row_of[tuple(p)] for p in audit_pts])
        if si < mz_count:
            full = sampler.gamma_at_points(smp, gamma_pts)
            gam[si] = full[:n_pts]
            gam_mz[si] = full[n_pts:]
        else:
            gam[si] = sampler.gamma_at_points(smp, audit_pts)
        c1v[si] = sampler.c1_terminal(si, audit_pts)
        psi2_half[si] = smp.psi[2][rows, grid.n_steps // 2]
        f2[si] = smp.psi[2][rows][:, func_idx]
        f1[si] = smp.psi[1][rows][:, func_idx]

    def mc_cov(x, y):
        """Empirical E[x conj(y)] with standard error (complex)."""
        prod = x * np.conj(y)
        mean = _rng.pairwise_sum(prod, axis=0) / len(prod)
        se = np.sqrt(
            (np.abs(prod - mean) ** 2).sum(axis=0) / (len(prod) - 1) / len(prod)
        )
        return mean, se

    # (a) covariance of C_1(n, T) with psi_2(n, T/2): reference is the
    # shared-increment quadrature sum_{mid_l < T/2} K21(mid_l) K_2(T/2-mid_l) dt
    w_pts = omega_from_norm_sq(ens.params, 2, norm_sq(audit_pts))
    cov_a, se_a = mc_cov(c1v, psi2_half)
    ref_a = np.empty(n_pts)
    for row, n in enumerate(audit_pts):
        k21 = sampler.k21_disc(n)
        mid = grid.midpoints
        live = mid < t_half
        kern2 = np.sin((t_half - mid[live]) * w_pts[row]) / w_pts[row]
        ref_a[row] = float(np.sum(k21[live] * kern2) * grid.dt)
    z_a = np.abs(cov_a - ref_a) / np.maximum(se_a, 1e-300)
    check_a = {
        "empirical": cov_a,
        "reference": ref_a,
        "se": se_a,
        "z": z_a,
        "passed": bool(np.all(z_a <= z_gate)),
    }

    # (b) third-chaos orthogonality against color-2 first chaos
    resid = gam - c1v
    z_b = []
    for fi in range(len(func_idx)):
        cov_b, se_b = mc_cov(resid, f2[:, :, fi])
        z_b.append(np.abs(cov_b) / np.maximum(se_b, 1e-300))
    z_b = np.asarray(z_b)
    check_b = {"z": z_b, "passed": bool(np.all(z_b <= z_gate))}

    # (c) gamma against color-1 first chaos
    z_c = []
    for fi in range(len(func_idx)):
        cov_c, se_c = mc_cov(gam, f1[:, :, fi])
        z_c.append(np.abs(cov_c) / np.maximum(se_c, 1e-300))
    z_c = np.asarray(z_c)
    check_c = {"z": z_c, "passed": bool(np.all(z_c <= z_gate))}

    # Ito isometry of C_1 at T
    var_emp = (np.abs(c1v) ** 2).mean(axis=0)
    var_se = (np.abs(c1v) ** 2).std(axis=0, ddof=1) / np.sqrt(n_samples)
    var_ref = np.asarray([sampler.c1_variance(n) for n in audit_pts])
    z_iso = np.abs(var_emp - var_ref) / np.maximum(var_se, 1e-300)
    iso = {
        "empirical": var_emp,
        "reference": var_ref,
        "se": var_se,
        "z": z_iso,
        "passed": bool(np.all(z_iso <= z_gate)),
    }

    mean_zero = None
    if mz_count:
        mz_mean = gam_mz.mean(axis=0)
        mz_se = gam_mz.std(axis=0, ddof=1) / np.sqrt(mz_count)
        z_mz = np.abs(mz_mean) / np.maximum(mz_se, 1e-300)
        mean_zero = {
            "samples": mz_count,
            "max_z": float(z_mz.max()),
            "passed": bool(np.all(z_mz <= z_gate)),
        }

    return WickAuditReport(
        n_samples=n_samples,
        isometry=iso,
        covariance_check=check_a,
        orthogonality_color2=check_b,
        orthogonality_color1=check_c,
        mean_zero=mean_zero,
        passed=bool(
            iso["passed"]
            and check_a["passed"]
            and check_b["passed"]
            and check_c["passed"]
            and (mean_zero is None or mean_zero["passed"])
        ),
    )
