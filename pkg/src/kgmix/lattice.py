"""Shell and window enumeration plus the deterministic lattice audits.

Conventions (sharp indicator cutoffs; smoothness only moves constants):

* dyadic shell at scale N: the closed annulus a0*N <= |l| <= a1*N;
* strong low-high window at scale N: |q| <= A_low * N**theta (closed);
* resonant window chi_res(m, r): the dyadic scales D(m), D(r) with
  D(x) = 2**floor(log2 <x>), <x> = (1 + |x|^2)^(1/2), lie within one octave,
  max(D)/min(D) <= 2.  This implies <m>/<r> < 4 for the default annulus.

All memberships are decided on exact integer |.|^2 values; audits are
deterministic and independent of any worker partition (chunks are fixed and
min/max/count reductions are exact).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dispersion import DispersionParams, omega_from_norm_sq, norm_sq

__all__ = [
    "CutoffProfile",
    "DyadicShell",
    "enumerate_shell",
    "ball_points",
    "annulus_points",
    "dyadic_scale",
    "phase_gap_audit",
    "GapAuditReport",
    "same_speed_contrast",
    "ContrastReport",
    "phase_layer_count",
    "low_output_gap_audit",
    "LowOutputGapReport",
]

_CHUNK = 1 << 22  # pair-evaluation block size (pairs), fixed for determinism


@dataclass(frozen=True)
class CutoffProfile:
    """Annulus constants, low-window constants, and the hard Fourier cutoff."""

    a0: float = 0.5
    a1: float = 1.0
    a_low: float = 1.0
    theta: float = 0.5
    pi_cut: Optional[int] = None

    def __post_init__(self):
        if not (0.0 < self.a0 < self.a1):
            raise ValueError("need 0 < a0 < a1")
        if self.a_low < 1.0:
            raise ValueError("A_low must be >= 1")
        if not (0.0 < self.theta < 1.0):
            raise ValueError("theta must lie in (0, 1)")

    def shell_radii(self, n_scale: int):
        return self.a0 * n_scale, self.a1 * n_scale

    def low_window_radius(self, n_scale: int) -> float:
        return self.a_low * float(n_scale) ** self.theta

    def rho(self, n_scale: int, pts) -> np.ndarray:
        lo, hi = self.shell_radii(n_scale)
        ns = norm_sq(pts).astype(np.float64)
        return (ns >= lo * lo) & (ns <= hi * hi)

    def chi_low(self, q, n_scale: int) -> np.ndarray:
        w = self.low_window_radius(n_scale)
        return norm_sq(q).astype(np.float64) <= w * w

    def chi_res(self, m, r) -> np.ndarray:
        dm = dyadic_scale(m)
        dr = dyadic_scale(r)
        return np.maximum(dm, dr) <= 2 * np.minimum(dm, dr)


def dyadic_scale(pts) -> np.ndarray:
    """D(x) = 2**floor(log2 <x>) with <x> = sqrt(1 + |x|^2); D(0) = 1."""
    ns = np.asarray(norm_sq(pts), dtype=np.int64)
    # floor(log2 sqrt(1+ns)) = floor(log2(1+ns))//2 on integers
    return np.int64(1) << (np.int64(63) - _clz64(1 + ns)) // 2


def _clz64(x: np.ndarray) -> np.ndarray:
    """Count leading zeros of positive int64 via bit length."""
    x = np.asarray(x, dtype=np.int64)
    nbits = np.zeros_like(x)
    y = x.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        mask = y >= (np.int64(1) << np.int64(shift))
        nbits = np.where(mask, nbits + shift, nbits)
        y = np.where(mask, y >> np.int64(shift), y)
    return 63 - nbits


def ball_points(radius: float, include_zero: bool = True) -> np.ndarray:
    """Integer points with |x| <= radius, lexicographically ordered."""
    r = int(np.floor(radius + 1e-12))
    ax = np.arange(-r, r + 1, dtype=np.int64)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    keep = norm_sq(pts).astype(np.float64) <= radius * radius + 1e-12
    pts = pts[keep]
    if not include_zero:
        pts = pts[norm_sq(pts) > 0]
    return pts


def annulus_points(lo: float, hi: float) -> np.ndarray:
    """Integer points with lo <= |x| <= hi (closed annulus), lex ordered."""
    r = int(np.floor(hi + 1e-12))
    ax = np.arange(-r, r + 1, dtype=np.int64)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    ns = norm_sq(pts).astype(np.float64)
    keep = (ns >= lo * lo - 1e-12) & (ns <= hi * hi + 1e-12)
    return pts[keep]


@dataclass(frozen=True)
class DyadicShell:
    n_scale: int
    points: np.ndarray
    empty: bool = field(default=False)

    def __len__(self):
        return len(self.points)


def enumerate_shell(profile: CutoffProfile, n_scale: int) -> DyadicShell:
    """Exact list of lattice points in the closed annulus [a0*N, a1*N].

    The result is closed under negation and, for N >= 16, its cardinality is
    within 20% of the annulus volume (4 pi / 3)(a1^3 - a0^3) N^3.
    """
    if n_scale < 1 or (n_scale & (n_scale - 1)) != 0:
        raise ValueError("shell scale must be a positive power of two")
    lo, hi = profile.shell_radii(n_scale)
    if profile.pi_cut is not None and hi > profile.pi_cut + 1e-12:
        raise ValueError("shell exceeds the hard Fourier cutoff pi_cut")
    pts = annulus_points(lo, hi)
    return DyadicShell(n_scale=n_scale, points=pts, empty=len(pts) == 0)


def _omega_table(params: DispersionParams, color: int, max_norm_sq: int) -> np.ndarray:
    return omega_from_norm_sq(
        params, color, np.arange(int(max_norm_sq) + 1, dtype=np.float64)
    )


def _shell_classes(points: np.ndarray):
    """Group shell points by exact |l|^2; returns (sorted radii^2, groups)."""
    ns = norm_sq(points)
    order = np.argsort(ns, kind="stable")
    pts = points[order]
    ns = ns[order]
    radii, starts = np.unique(ns, return_index=True)
    bounds = np.append(starts, len(ns))
    groups = [pts[bounds[i] : bounds[i + 1]] for i in range(len(radii))]
    return radii, groups


@dataclass(frozen=True)
class GapAuditReport:
    i: int
    j: int
    n_scale: int
    speeds_distinct: bool
    min_abs_phase: float
    argmin_l: tuple
    argmin_q: tuple
    max_abs_phase: float
    gap_ratio: float
    threshold: float
    passed: bool
    pairs: int


def _pairwise_extreme(
    wi_tab, wj_tab, radii, groups, window, mode: str
):
    """Exact min or max of |omega_i(l+q) - omega_j(l)| with class pruning.

    Classes are visited in order of their continuum bound; a class whose
    bound cannot beat the current best is skipped.  Evaluated classes are
    exact lattice computations, so the extremum is exact.
    """
    wq = float(np.sqrt(norm_sq(window).max())) if len(window) else 0.0
    qsq = norm_sq(window).astype(np.float64)
    r = np.sqrt(radii.astype(np.float64))
    x_lo = np.maximum(r - wq, 0.0)
    x_hi = r + wq
    g = wj_tab[radii]
    f_lo = np.interp(x_lo * x_lo, np.arange(len(wi_tab)), wi_tab)
    f_hi = np.interp(x_hi * x_hi, np.arange(len(wi_tab)), wi_tab)
    if mode == "min":
        inside = (g >= f_lo) & (g <= f_hi)
        bound = np.where(inside, 0.0, np.minimum(np.abs(f_lo - g), np.abs(f_hi - g)))
        order = np.argsort(bound, kind="stable")
    else:
        bound = np.maximum(np.abs(f_lo - g), np.abs(f_hi - g))
        order = np.argsort(-bound, kind="stable")

    best = np.inf if mode == "min" else -np.inf
    arg = (None, None)
    pairs = 0
    wpts = window.astype(np.float64)
    for ci in order:
        b = bound[ci]
        if (mode == "min" and b > best) or (mode == "max" and b < best):
            break
        pts = groups[ci]
        rsq = int(radii[ci])
        wj_val = wj_tab[rsq]
        block = max(1, _CHUNK // max(1, len(window)))
        for s in range(0, len(pts), block):
            chunk = pts[s : s + block].astype(np.float64)
            dot = chunk @ wpts.T
            xsq = rsq + 2.0 * dot + qsq[None, :]
            vals = np.abs(wi_tab[xsq.astype(np.int64)] - wj_val)
            pairs += vals.size
            if mode == "min":
                k = int(np.argmin(vals))
                v = float(vals.flat[k])
                if v < best:
                    best = v
                    li, qi = divmod(k, vals.shape[1])
                    arg = (
                        tuple(int(c) for c in pts[s + li]),
                        tuple(int(c) for c in window[qi]),
                    )
            else:
                v = float(vals.max())
                if v > best:
                    best = v
    return best, arg, pairs


def phase_gap_audit(
    params: DispersionParams,
    profile: CutoffProfile,
    i: int,
    j: int,
    n_scale: int,
) -> GapAuditReport:
    """Brute-force extrema of |omega_i(l+q) - omega_j(l)| on shell x window.

    The gap ratio is the minimum normalized by |c_i - c_j| * (a0*N)^alpha,
    the leading-order size of the different-speed phase on the shell (the
    bare (a0*N)^alpha when the speeds coincide).  The pass flag records
    min >= 0.5 * |c_i - c_j| * (a0*N)^alpha; the threshold scale N0 above
    which it holds is an empirical report, not an input.
    """
    if i == j:
        raise ValueError("phase_gap_audit audits cross pairs i != j")
    shell = enumerate_shell(profile, n_scale)
    window = ball_points(profile.low_window_radius(n_scale))
    radii, groups = _shell_classes(shell.points)
    max_xsq = int(
        np.ceil((profile.a1 * n_scale + profile.low_window_radius(n_scale) + 1) ** 2)
    )
    wi_tab = _omega_table(params, i, max_xsq)
    wj_tab = _omega_table(params, j, int(radii.max()))
    mn, arg, pairs_min = _pairwise_extreme(wi_tab, wj_tab, radii, groups, window, "min")
    mx, _, pairs_max = _pairwise_extreme(wi_tab, wj_tab, radii, groups, window, "max")

    dc = abs(params.speed(i) - params.speed(j))
    scale = (profile.a0 * n_scale) ** params.alpha
    denom = (dc if params.speeds_distinct else 1.0) * scale
    threshold = 0.5 * dc * scale
    return GapAuditReport(
        i=i,
        j=j,
        n_scale=n_scale,
        speeds_distinct=params.speeds_distinct,
        min_abs_phase=mn,
        argmin_l=arg[0],
        argmin_q=arg[1],
        max_abs_phase=mx,
        gap_ratio=mn / denom,
        threshold=threshold,
        passed=bool(params.speeds_distinct and mn >= threshold),
        pairs=pairs_min + pairs_max,
    )


@dataclass(frozen=True)
class ContrastReport:
    color: int
    n_scales: tuple
    max_values: tuple
    slope: float
    reference: float
    passed: bool


def same_speed_contrast(
    params: DispersionParams,
    profile: CutoffProfile,
    color: int,
    n_scales: Sequence[int],
) -> ContrastReport:
    """Exhaustive max of |omega(l+q) - omega(l)| per shell and its dyadic slope.

    The fitted slope of log2(max) against log2(N) is compared with the
    reference alpha - 1 + theta; the audit passes when the slope does not
    exceed the reference by more than 0.1.
    """
    maxima = []
    for n_scale in n_scales:
        shell = enumerate_shell(profile, n_scale)
        window = ball_points(profile.low_window_radius(n_scale))
        radii, groups = _shell_classes(shell.points)
        max_xsq = int(
            np.ceil(
                (profile.a1 * n_scale + profile.low_window_radius(n_scale) + 1) ** 2
            )
        )
        tab = _omega_table(params, color, max_xsq)
        mx, _, _ = _pairwise_extreme(tab, tab, radii, groups, window, "max")
        maxima.append(mx)
    lx = np.log2(np.asarray(n_scales, dtype=np.float64))
    ly = np.log2(np.asarray(maxima))
    slope = float(np.polyfit(lx, ly, 1)[0])
    ref = params.alpha - 1.0 + profile.theta
    return ContrastReport(
        color=color,
        n_scales=tuple(int(n) for n in n_scales),
        max_values=tuple(float(m) for m in maxima),
        slope=slope,
        reference=ref,
        passed=bool(slope <= ref + 0.1),
    )


_LAYER_TIE_TOL = 1e-9  # boundary ties are measure-zero but must be deterministic


def phase_layer_count(
    params: DispersionParams,
    profile: CutoffProfile,
    i: int,
    sigma,
    n,
    m_scale: int,
    layer: float,
    enumeration: str = "k",
) -> int:
    """Exact count of k with |k| ~ M, |n-k| ~ M and |three_phase| <= layer.

    `enumeration` switches the loop variable between k and n-k; both must
    return the same count (re-enumeration oracle).
    """
    s0, s1, s2 = (int(s) for s in sigma)
    n = np.asarray(n, dtype=np.int64)
    lo, hi = profile.shell_radii(m_scale)
    pts = annulus_points(lo, hi)
    if enumeration == "k":
        kpts = pts
    elif enumeration == "n_minus_k":
        kpts = n[None, :] - pts
    else:
        raise ValueError("enumeration must be 'k' or 'n_minus_k'")
    other = n[None, :] - kpts
    ns_k = norm_sq(kpts).astype(np.float64)
    ns_o = norm_sq(other).astype(np.float64)
    keep = (
        (ns_k >= lo * lo - 1e-12)
        & (ns_k <= hi * hi + 1e-12)
        & (ns_o >= lo * lo - 1e-12)
        & (ns_o <= hi * hi + 1e-12)
    )
    kpts = kpts[keep]
    other = other[keep]
    w_out = float(omega_from_norm_sq(params, i, float(norm_sq(n))))
    phase = (
        s0 * w_out
        + s1 * omega_from_norm_sq(params, 1, norm_sq(kpts))
        + s2 * omega_from_norm_sq(params, 2, norm_sq(other))
    )
    return int(np.count_nonzero(np.abs(phase) <= layer + _LAYER_TIE_TOL))


@dataclass(frozen=True)
class LowOutputGapReport:
    i: int
    n: tuple
    m_scale: int
    branch_minima: dict
    min_abs_phase: float
    ratio: float
    threshold: float
    passed: bool


def low_output_gap_audit(
    params: DispersionParams,
    profile: CutoffProfile,
    i: int,
    n,
    m_scale: int,
    c0: float = 8.0,
) -> LowOutputGapReport:
    """Minimum of |three_phase| over all sign branches on the balanced region.

    Requires M >= c0 * <n> (low output against high internal frequencies).
    Pass records min >= 0.5 * |c1 - c2| * (a0*M)^alpha over every branch.
    """
    n = np.asarray(n, dtype=np.int64)
    n_gauge = float(np.sqrt(1.0 + float(norm_sq(n))))
    if m_scale < c0 * n_gauge:
        raise ValueError(
            f"low_output_gap_audit requires M >= C0*<n> with C0={c0}; "
            f"got M={m_scale}, <n>={n_gauge:.3f}"
        )
    lo, hi = profile.shell_radii(m_scale)
    pts = annulus_points(lo, hi)
    other = n[None, :] - pts
    ns_o = norm_sq(other).astype(np.float64)
    keep = (ns_o >= lo * lo - 1e-12) & (ns_o <= hi * hi + 1e-12)
    pts, other = pts[keep], other[keep]
    w1 = omega_from_norm_sq(params, 1, norm_sq(pts))
    w2 = omega_from_norm_sq(params, 2, norm_sq(other))
    w_out = float(omega_from_norm_sq(params, i, float(norm_sq(n))))
    minima = {}
    for s0 in (1, -1):
        for s1 in (1, -1):
            for s2 in (1, -1):
                phase = s0 * w_out + s1 * w1 + s2 * w2
                minima[(s0, s1, s2)] = float(np.abs(phase).min())
    overall = min(minima.values())
    dc = abs(params.c1 - params.c2)
    scale = (profile.a0 * m_scale) ** params.alpha
    threshold = 0.5 * dc * scale
    denom = (dc if params.speeds_distinct else 1.0) * scale
    return LowOutputGapReport(
        i=i,
        n=tuple(int(c) for c in n),
        m_scale=m_scale,
        branch_minima={k: v for k, v in minima.items()},
        min_abs_phase=overall,
        ratio=overall / denom,
        threshold=threshold,
        passed=bool(params.speeds_distinct and overall >= threshold),
    )
