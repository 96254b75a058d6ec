"""Exact-covariance sampling of the linear stochastic convolutions and the
first-Picard objects, with variance-exponent estimation.

The linear field of color i has Fourier coefficients

    psi_i(n, t) = int_0^t sin((t-s) w) / w  d beta_n^i(s),   w = omega_i(n),

with independent colors and the usual real-field (Hermitian) convention.
The time covariance is known in closed form (`covariance_sigma`), which
permits two sampling modes:

* "exact": per mode, the path over the grid times is drawn with exactly the
  closed-form Gram matrix (matrix square root per mode).  No time
  discretization bias enters variance estimates.
* "increment": explicit Brownian increments are stored and the path is the
  midpoint-evaluated discrete Ito sum.  Required whenever a later object
  must be coupled to the same noise realization.

All randomness is counter-based (see `_rng`): a path is a pure function of
(master seed, sample index, color, mode coordinates), so ensembles are
reproducible for any worker partition and cutoff runs share noise on common
modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence

import numpy as np
import scipy.fft as sfft
import scipy.signal

from . import _rng
from .dispersion import DispersionParams, omega_from_norm_sq, norm_sq
from .lattice import CutoffProfile, ball_points, enumerate_shell

__all__ = [
    "TimeGrid",
    "CovarianceEval",
    "CovarianceError",
    "covariance_sigma",
    "NoisePath",
    "FieldSample",
    "FieldEnsemble",
    "sample_linear_fields",
    "theta_coefficients",
    "first_picard_V",
    "shell_second_moment",
    "psi_shell_moment_direct",
    "fit_exponent",
    "ShellMoment",
    "ExponentFit",
]

# rng stream labels (part of the on-disk reproducibility contract)
_STREAM_EXACT = 1
_STREAM_INCREMENT = 2
_STREAM_DIRECT = 3

_INCREMENT_RESOLUTION = 0.1  # enforced bound on dt * omega(cutoff)


class CovarianceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k*T/M on [0, T]."""

    horizon: float = 1.0
    n_steps: int = 64

    def __post_init__(self):
        if self.horizon <= 0 or self.n_steps < 1:
            raise ValueError("need positive horizon and at least one step")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not np.isclose(k * self.dt, t, rtol=0, atol=1e-12):
            raise ValueError(f"{t} is not a grid time")
        return k


def _sigma_parts(w, s, t):
    """Leading and remainder parts of the covariance for 0 <= s <= t.

    sigma_0 = s cos((t-s)w) / (2 w^2)
    sigma_r = [sin((t-s)w) - sin((t+s)w)] / (4 w^3);  |sigma_r| <= 1/(2 w^3).
    """
    w = np.asarray(w, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    s0 = s * np.cos((t - s) * w) / (2.0 * w * w)
    sr = (np.sin((t - s) * w) - np.sin((t + s) * w)) / (4.0 * w**3)
    return s0, sr


@dataclass(frozen=True)
class CovarianceEval:
    color: int
    l: tuple
    s: float
    t: float
    sigma0: float
    sigma_r: float
    sigma: float
    swapped: bool


def covariance_sigma(
    params: DispersionParams, color: int, l, s: float, t: float
) -> CovarianceEval:
    """Closed-form covariance E[psi(l, s) psi(-l, t)] with its split.

    Arguments with s > t are swapped internally (covariance is symmetric in
    its time pair); the returned record notes the swap.
    """
    swapped = s > t
    if swapped:
        s, t = t, s
    w = float(omega_from_norm_sq(params, color, float(norm_sq(np.asarray(l)))))
    s0, sr = _sigma_parts(w, s, t)
    return CovarianceEval(
        color=color,
        l=tuple(int(c) for c in np.asarray(l)),
        s=float(s),
        t=float(t),
        sigma0=float(s0),
        sigma_r=float(sr),
        sigma=float(s0) + float(sr),
        swapped=swapped,
    )


def _sigma_gram(w: float, times: np.ndarray) -> np.ndarray:
    """Gram matrix [sigma(t_k ^ t_l, t_k v t_l)] over the given times."""
    tt = np.asarray(times, dtype=np.float64)
    lo = np.minimum.outer(tt, tt)
    hi = np.maximum.outer(tt, tt)
    s0, sr = _sigma_parts(w, lo, hi)
    return s0 + sr


def _gram_factor(w: float, times: np.ndarray, label: str) -> np.ndarray:
    g = _sigma_gram(w, times)
    try:
        return np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(g) / len(times)
        try:
            return np.linalg.cholesky(g + jitter * np.eye(len(times)))
        except np.linalg.LinAlgError as exc:
            raise CovarianceError(
                f"exact-mode Gram matrix indefinite beyond tolerance ({label})"
            ) from exc


def _canonical_split(modes: np.ndarray):
    """Split modes into canonical representatives and mirror bookkeeping.

    A mode is canonical when (n_x, n_y, n_z) > (0, 0, 0) lexicographically;
    the zero mode is its own (real) representative.  Returns (codes of the
    canonical image of every row, mask of rows that are mirrored, mask of
    zero rows).
    """
    m = np.asarray(modes, dtype=np.int64)
    zero = (m == 0).all(axis=1)
    first = np.where(m[:, 0] != 0, m[:, 0], np.where(m[:, 1] != 0, m[:, 1], m[:, 2]))
    mirrored = first < 0
    canon = np.where(mirrored[:, None], -m, m)
    return _rng.pack_modes(canon), mirrored, zero


@dataclass(frozen=True)
class NoisePath:
    """Labels for one realization's Brownian increments.

    Increments are generated on demand: color-1 and color-2 use disjoint
    key streams of the master seed, every mode has its own substream keyed
    by its integer coordinates, and the Hermitian convention (increment at
    -n is the conjugate at n; the zero mode is real) holds by construction
    with E|d beta_n|^2 = dt.

    `fine_factor` refines the keyed resolution: draws are indexed by the
    fine grid with n_steps * fine_factor increments and aggregated in
    groups, so runs whose fine resolutions coincide share one Brownian
    path (time-refinement audits).
    """

    grid: TimeGrid
    lam: int
    master_seed: int
    sample_index: int = 0
    fine_factor: int = 1

    def increments(self, color: int, modes: np.ndarray) -> np.ndarray:
        key = _rng.derive_key(
            self.master_seed, _STREAM_INCREMENT, self.sample_index, color
        )
        codes, mirrored, zero = _canonical_split(modes)
        f = int(self.fine_factor)
        n_fine = self.grid.n_steps * f
        # draw each canonical substream once; mirrored rows conjugate it
        uniq, inverse = np.unique(codes, return_inverse=True)
        zu = _rng.complex_normals(key, uniq, n_fine)
        z = zu[inverse]
        if zero.any():
            z[zero] = _rng.standard_normals(key, codes[zero], n_fine)
        z[mirrored] = np.conj(z[mirrored])
        z = z.reshape(len(modes), self.grid.n_steps, f).sum(axis=2)
        return z * np.sqrt(self.grid.dt / f)


@dataclass
class FieldSample:
    """One realization of the two linear fields on the ensemble's mode cube."""

    sample_index: int
    modes: np.ndarray
    grid: TimeGrid
    psi: Dict[int, np.ndarray]  # color -> (n_modes, n_steps+1) paths
    derived: Dict[str, np.ndarray] = field(default_factory=dict)


class FieldEnsemble:
    """Lazily evaluated ensemble of linear-field realizations.

    Samples are pure functions of (master_seed, sample_index); nothing is
    shared between samples, so iteration order and worker partition cannot
    change any value.
    """

    def __init__(
        self,
        params: DispersionParams,
        profile: CutoffProfile,
        grid: TimeGrid,
        lam: int,
        master_seed: int,
        n_samples: int,
        mode: str = "exact",
        fine_factor: int = 1,
    ):
        if mode not in ("exact", "increment"):
            raise ValueError("mode must be 'exact' or 'increment'")
        if lam < 0:
            raise ValueError("cutoff must be nonnegative")
        self.params = params
        self.profile = profile
        self.grid = grid
        self.lam = lam
        self.master_seed = master_seed
        self.n_samples = n_samples
        self.mode = mode
        self.fine_factor = fine_factor
        self.modes = ball_points(lam)
        self._nsq = norm_sq(self.modes)
        self._codes, self._mirrored, self._zero = _canonical_split(self.modes)
        self._classes = self._radius_classes()
        self._factors: Dict[int, Dict[int, np.ndarray]] = {1: {}, 2: {}}
        if mode == "increment":
            wmax = float(
                max(
                    omega_from_norm_sq(params, c, float(self._nsq.max()))
                    for c in (1, 2)
                )
            )
            if grid.dt * wmax > _INCREMENT_RESOLUTION + 1e-12:
                raise ValueError(
                    f"increment mode needs dt*omega(cutoff) <= {_INCREMENT_RESOLUTION}"
                    f"; got {grid.dt * wmax:.4f}"
                )

    def _radius_classes(self):
        radii, inverse = np.unique(self._nsq, return_inverse=True)
        groups = [np.nonzero(inverse == k)[0] for k in range(len(radii))]
        return list(zip(radii.tolist(), groups))

    def _factor(self, color: int, nsq: int) -> np.ndarray:
        cache = self._factors[color]
        if nsq not in cache:
            w = float(omega_from_norm_sq(self.params, color, float(nsq)))
            cache[nsq] = _gram_factor(
                w, self.grid.times[1:], f"color {color}, |n|^2 = {nsq}"
            )
        return cache[nsq]

    def noise(self, sample_index: int) -> NoisePath:
        return NoisePath(
            grid=self.grid,
            lam=self.lam,
            master_seed=self.master_seed,
            sample_index=sample_index,
            fine_factor=self.fine_factor,
        )

    def sample(self, sample_index: int) -> FieldSample:
        if not (0 <= sample_index < self.n_samples):
            raise IndexError("sample index out of range")
        psi = {}
        for color in (1, 2):
            if self.mode == "exact":
                psi[color] = self._sample_exact(color, sample_index)
            else:
                psi[color] = self._sample_increment(color, sample_index)
        return FieldSample(
            sample_index=sample_index,
            modes=self.modes,
            grid=self.grid,
            psi=psi,
        )

    def _sample_exact(self, color: int, sample_index: int) -> np.ndarray:
        m = self.grid.n_steps
        key = _rng.derive_key(self.master_seed, _STREAM_EXACT, sample_index, color)
        uniq, inverse = np.unique(self._codes, return_inverse=True)
        z = _rng.complex_normals(key, uniq, m)[inverse]
        if self._zero.any():
            z[self._zero] = _rng.standard_normals(key, self._codes[self._zero], m)
        z[self._mirrored] = np.conj(z[self._mirrored])
        out = np.zeros((len(self.modes), m + 1), dtype=np.complex128)
        for nsq, rows in self._classes:
            fac = self._factor(color, int(nsq))
            out[rows, 1:] = z[rows] @ fac.T
        return out

    def _sample_increment(self, color: int, sample_index: int) -> np.ndarray:
        """Midpoint-evaluated discrete Ito paths, one batched convolution.

        The per-mode causal kernel depends only on the radius class, so its
        spectrum is computed per class and gathered to mode rows; a single
        batched FFT then convolves every mode at once.
        """
        m = self.grid.n_steps
        noise = self.noise(sample_index)
        dbeta = noise.increments(color, self.modes)
        mid = self.grid.midpoints
        size = sfft.next_fast_len(2 * m)
        w_class = omega_from_norm_sq(
            self.params, color, np.asarray([nsq for nsq, _ in self._classes], float)
        )
        kern = np.sin(mid[None, :] * w_class[:, None]) / w_class[:, None]
        kern_hat = sfft.fft(kern, n=size, axis=1, workers=-1)
        row_class = np.empty(len(self.modes), dtype=np.intp)
        for ci, (_, rows) in enumerate(self._classes):
            row_class[rows] = ci
        sig_hat = sfft.fft(dbeta, n=size, axis=1, workers=-1)
        sig_hat *= kern_hat[row_class]
        conv = sfft.ifft(sig_hat, axis=1, workers=-1)[:, :m]
        out = np.zeros((len(self.modes), m + 1), dtype=np.complex128)
        out[:, 1:] = conv
        return out

    # -- spatial embedding -------------------------------------------------

    def embed(self, flat: np.ndarray, size: int) -> np.ndarray:
        """Scatter flat mode coefficients onto a periodic cube of edge `size`."""
        cube = np.zeros((size,) * 3 + flat.shape[1:], dtype=np.complex128)
        ix, iy, iz = (self.modes.T % size).astype(np.intp)
        cube[ix, iy, iz] = flat
        return cube

    def extract(self, cube: np.ndarray, pts: np.ndarray) -> np.ndarray:
        size = cube.shape[0]
        ix, iy, iz = (np.asarray(pts, dtype=np.int64).T % size).astype(np.intp)
        return cube[ix, iy, iz]


def sample_linear_fields(
    params: DispersionParams,
    profile: CutoffProfile,
    grid: TimeGrid,
    noise: NoisePath,
    mode: str = "exact",
    n_samples: int = 1,
) -> FieldEnsemble:
    """Construct the lazily sampled ensemble of linear fields.

    `noise` supplies the cutoff and master seed; in increment mode every
    derived object built later from the same NoisePath labels shares the
    identical Brownian path.
    """
    if noise.grid != grid:
        raise ValueError("noise grid differs from the requested grid")
    return FieldEnsemble(
        params=params,
        profile=profile,
        grid=grid,
        lam=noise.lam,
        master_seed=noise.master_seed,
        n_samples=n_samples,
        mode=mode,
    )


# -- quadratic object ------------------------------------------------------


def _pad_size(lam: int) -> int:
    return sfft.next_fast_len(4 * lam + 1, real=True)


def _half_embed(modes: np.ndarray, values: np.ndarray, size: int, cdtype) -> np.ndarray:
    """Embed Hermitian coefficients into a batched rfft half-spectrum.

    `values` has shape (n_modes, n_t); the output is time-first
    (n_t, size, size, size//2 + 1).  Modes with negative last component are
    dropped; their mirrors carry the same information, so the reconstructed
    physical field is exact.
    """
    n_t = values.shape[1]
    half = np.zeros((n_t, size, size, size // 2 + 1), dtype=cdtype)
    keep = modes[:, 2] >= 0
    m = modes[keep]
    ix, iy = (m[:, 0] % size).astype(np.intp), (m[:, 1] % size).astype(np.intp)
    iz = m[:, 2].astype(np.intp)
    half[:, ix, iy, iz] = values[keep].T
    return half


def _extract_spectrum(batch_hat: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Read coefficients at integer pts from time-first half-spectra."""
    n_t, sx, sy, sz = batch_hat.shape
    pts = np.asarray(pts, dtype=np.int64)
    flip = pts[:, 2] < 0
    p = np.where(flip[:, None], -pts, pts)
    flat = ((p[:, 0] % sx) * sy + (p[:, 1] % sy)) * sz + p[:, 2]
    vals = np.take(batch_hat.reshape(n_t, -1), flat.astype(np.intp), axis=1)
    vals = np.ascontiguousarray(vals.T)
    vals[flip] = np.conj(vals[flip])
    return vals


def product_slices(
    ensemble: "FieldEnsemble",
    sample: "FieldSample",
    t_indices: np.ndarray,
    out_pts: np.ndarray,
    real_dtype=np.float64,
) -> np.ndarray:
    """Coefficients of psi_1 psi_2 at the given points and time indices.

    Real-field fast path: both factors are Hermitian, so the product is
    computed on a zero-padded real grid with batched rfft transforms.  The
    pad is alias-free for every requested output: an aliased image shifts
    an output frequency by the grid period, which exceeds the product's
    support radius 2*lam whenever edge >= max|out| + 2*lam + 1.
    """
    out_pts = np.asarray(out_pts, dtype=np.int64)
    out_radius = int(np.ceil(np.sqrt(norm_sq(out_pts).max(initial=0))))
    size = sfft.next_fast_len(
        min(4 * ensemble.lam, 2 * ensemble.lam + out_radius) + 1, real=True
    )
    cdtype = np.complex64 if real_dtype == np.float32 else np.complex128
    t_indices = np.atleast_1d(np.asarray(t_indices, dtype=np.int64))
    out = np.empty((len(out_pts), len(t_indices)), dtype=cdtype)
    chunk = max(1, (1 << 24) // (size**3))
    axes = (1, 2, 3)
    for c0 in range(0, len(t_indices), chunk):
        sel = t_indices[c0 : c0 + chunk]
        h1 = _half_embed(ensemble.modes, sample.psi[1][:, sel], size, cdtype)
        h2 = _half_embed(ensemble.modes, sample.psi[2][:, sel], size, cdtype)
        f1 = sfft.irfftn(h1, s=(size,) * 3, axes=axes, workers=-1)
        f2 = sfft.irfftn(h2, s=(size,) * 3, axes=axes, workers=-1)
        prod_hat = sfft.rfftn(f1 * f2, axes=axes, workers=-1) * float(size) ** 3
        out[:, c0 : c0 + len(sel)] = _extract_spectrum(prod_hat, out_pts)
    return out


def theta_cube(
    ensemble: FieldEnsemble, sample: FieldSample, t_index, out_radius: Optional[int] = None
) -> np.ndarray:
    """Coefficients of psi_1 * psi_2 on a periodic cube, no aliasing.

    Computed as a zero-padded fast convolution: the padded grid has edge
    >= 4*lam + 1, so every output mode with |n| <= 2*lam is the exact linear
    convolution sum.  Returns the cube (edge p) for each requested time
    index; `out_radius` only documents the caller's intended use.
    """
    del out_radius
    p = _pad_size(ensemble.lam)
    tidx = np.atleast_1d(np.asarray(t_index, dtype=np.int64))
    f1 = ensemble.embed(sample.psi[1][:, tidx], p)
    f2 = ensemble.embed(sample.psi[2][:, tidx], p)
    axes = (0, 1, 2)
    phys1 = sfft.ifftn(f1, axes=axes, workers=-1).real
    phys2 = sfft.ifftn(f2, axes=axes, workers=-1).real
    prod = phys1 * phys2
    out = sfft.fftn(prod, axes=axes, workers=-1) * float(p) ** 3
    return out


def theta_coefficients(ensemble: FieldEnsemble, n, t: float) -> np.ndarray:
    """Per-sample coefficient of psi_1 psi_2 at output frequency n, time t."""
    n = np.asarray(n, dtype=np.int64)
    if float(np.sqrt(norm_sq(n))) > 2 * ensemble.lam + 1e-9:
        raise ValueError("output frequency beyond 2*cutoff is not representable")
    k = ensemble.grid.index_of(t)
    vals = np.empty(ensemble.n_samples, dtype=np.complex128)
    for s in range(ensemble.n_samples):
        cube = theta_cube(ensemble, ensemble.sample(s), k)
        vals[s] = ensemble.extract(cube[..., 0], n[None, :])[0]
    return vals


# -- first Picard object ---------------------------------------------------


def _causal_time_convolution(kernels: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """Row-wise causal convolution sum_{j<=k} kern[k-j] * sig[j]."""
    m = signal.shape[1]
    size = sfft.next_fast_len(2 * m)
    kf = sfft.fft(kernels, n=size, axis=1, workers=-1)
    sf = sfft.fft(signal, n=size, axis=1, workers=-1)
    return sfft.ifft(kf * sf, axis=1, workers=-1)[:, :m]


def first_picard_V(
    ensemble: FieldEnsemble,
    sample: FieldSample,
    color: int,
    out_modes: Optional[np.ndarray] = None,
    real_dtype=np.float64,
):
    """Duhamel quadrature paths V(n, t_k) and d/dt V(n, t_k).

    Composite trapezoid in s on the grid; both V and its time derivative
    vanish identically at t_0 = 0 (zero-length integral, and the product
    field is zero at time zero by the zero-data convention), so the
    trapezoid reduces to an exact causal convolution along the grid.
    """
    grid = ensemble.grid
    if out_modes is None:
        out_modes = ensemble.modes
    tidx = np.arange(grid.n_steps + 1)
    theta = product_slices(
        ensemble, sample, tidx, np.asarray(out_modes, dtype=np.int64),
        real_dtype=real_dtype,
    )
    w = omega_from_norm_sq(ensemble.params, color, norm_sq(out_modes)).astype(
        np.float64
    )
    lags = grid.times[None, :] * w[:, None]
    v = grid.dt * _causal_time_convolution(np.sin(lags) / w[:, None], theta)
    cos_part = _causal_time_convolution(np.cos(lags), theta)
    dv = grid.dt * (cos_part - 0.5 * theta)
    v[:, 0] = 0.0
    dv[:, 0] = 0.0
    return v, dv


# -- shell statistics -------------------------------------------------------


@dataclass(frozen=True)
class ShellMoment:
    obj: str
    n_scale: int
    t: float
    n_samples: int
    mean_sq: float
    se: float
    per_sample: np.ndarray


def _jackknife_se(values: np.ndarray) -> float:
    """Delete-one jackknife standard error of the mean."""
    n = len(values)
    if n < 2:
        return 0.0
    total = _rng.pairwise_sum(values)
    loo = (total - values) / (n - 1)
    mean_loo = _rng.pairwise_sum(loo) / n
    var = _rng.pairwise_sum((loo - mean_loo) ** 2) * (n - 1) / n
    return float(np.sqrt(var))


def shell_second_moment(
    ensemble: FieldEnsemble,
    obj: str,
    n_scale: int,
    t: float,
    provider=None,
) -> ShellMoment:
    """Average of |coefficient|^2 over a dyadic shell and over samples.

    `obj` selects psi1/psi2/theta/V1/V2/dV1/dV2 (or any derived object with
    a registered provider).  Standard error is the delete-one jackknife of
    the per-sample shell means.
    """
    shell = enumerate_shell(ensemble.profile, n_scale)
    if shell.empty:
        raise ValueError(f"shell at N={n_scale} is empty")
    pts = shell.points
    k = ensemble.grid.index_of(t)
    per_sample = np.empty(ensemble.n_samples, dtype=np.float64)
    for s in range(ensemble.n_samples):
        smp = ensemble.sample(s)
        values = _object_values(ensemble, smp, obj, pts, k, provider)
        per_sample[s] = float(np.mean(np.abs(values) ** 2))
    mean = float(_rng.pairwise_sum(per_sample) / len(per_sample))
    return ShellMoment(
        obj=obj,
        n_scale=n_scale,
        t=t,
        n_samples=ensemble.n_samples,
        mean_sq=mean,
        se=_jackknife_se(per_sample),
        per_sample=per_sample,
    )


def _object_values(ensemble, sample, obj, pts, t_index, provider):
    if provider is not None:
        return provider(ensemble, sample, pts, t_index)
    if obj in ("psi1", "psi2"):
        color = int(obj[-1])
        idx = _mode_rows(ensemble, pts)
        return sample.psi[color][idx, t_index]
    if obj == "theta":
        cube = theta_cube(ensemble, sample, t_index)
        return ensemble.extract(cube[..., 0], pts)
    if obj in ("V1", "V2", "dV1", "dV2"):
        color = int(obj[-1])
        key = f"picard{color}"
        if key not in sample.derived:
            v, dv = first_picard_V(ensemble, sample, color)
            sample.derived[key] = (v, dv)
        v, dv = sample.derived[key]
        idx = _mode_rows(ensemble, pts)
        return (v if obj.startswith("V") else dv)[idx, t_index]
    raise ValueError(f"unknown object {obj!r}")


def _mode_rows(ensemble: FieldEnsemble, pts: np.ndarray) -> np.ndarray:
    if not hasattr(ensemble, "_row_of"):
        ensemble._row_of = {
            tuple(m): r for r, m in enumerate(map(tuple, ensemble.modes))
        }
    try:
        return np.asarray([ensemble._row_of[tuple(p)] for p in np.asarray(pts)])
    except KeyError as exc:
        raise ValueError("shell point outside the ensemble cutoff") from exc


def psi_shell_moment_direct(
    params: DispersionParams,
    profile: CutoffProfile,
    color: int,
    n_scale: int,
    t: float,
    master_seed: int,
    n_samples: int,
) -> ShellMoment:
    """Shell second moment of the linear field by direct terminal sampling.

    Marginally exact (variance sigma(n; t, t) per mode), usable for shells
    far beyond any convolution cutoff.  The shell mean runs over canonical
    representatives; mirrors contribute the identical squared modulus.
    """
    shell = enumerate_shell(profile, n_scale)
    if shell.empty:
        raise ValueError(f"shell at N={n_scale} is empty")
    pts = shell.points
    codes, mirrored, zero = _canonical_split(pts)
    keep = ~mirrored
    codes = codes[keep]
    sig = covariance_vector(params, color, norm_sq(pts[keep]), t)
    per_sample = np.empty(n_samples, dtype=np.float64)
    for s in range(n_samples):
        key = _rng.derive_key(master_seed, _STREAM_DIRECT, s, color)
        z = _rng.complex_normals(key, codes, 1)[:, 0]
        if zero[keep].any():
            z[zero[keep]] = _rng.standard_normals(key, codes[zero[keep]], 1)[:, 0]
        per_sample[s] = float(np.mean(sig * np.abs(z) ** 2))
    mean = float(_rng.pairwise_sum(per_sample) / n_samples)
    return ShellMoment(
        obj=f"psi{color}",
        n_scale=n_scale,
        t=t,
        n_samples=n_samples,
        mean_sq=mean,
        se=_jackknife_se(per_sample),
        per_sample=per_sample,
    )


def covariance_vector(params, color, nsq, t):
    """sigma(n; t, t) over an array of |n|^2 values."""
    w = omega_from_norm_sq(params, color, np.asarray(nsq, dtype=np.float64))
    s0, sr = _sigma_parts(w, t, t)
    return s0 + sr


# -- exponent fits ----------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    slope_se: float
    n_scales: tuple
    dropped: tuple


def fit_exponent(series: Sequence) -> ExponentFit:
    """Weighted least-squares slope of log2(mean square) against log2(N).

    `series` holds (N, mean_sq, se) triples; points with nonpositive mean
    square are dropped and flagged.  With all-zero standard errors the fit
    is unweighted (exact power-law inputs reproduce the exponent to
    rounding).
    """
    rows = [(float(n), float(m), float(se)) for n, m, se in series]
    dropped = tuple(int(n) for n, m, _ in rows if m <= 0)
    rows = [r for r in rows if r[1] > 0]
    if len(rows) < 3:
        raise ValueError("fit_exponent needs at least 3 usable dyadic points")
    n = np.array([r[0] for r in rows])
    m = np.array([r[1] for r in rows])
    se = np.array([r[2] for r in rows])
    x = np.log2(n)
    y = np.log2(m)
    se_log = se / (m * np.log(2.0))
    if np.all(se_log == 0):
        w = np.ones_like(x)
    else:
        floor_val = max(se_log[se_log > 0].min() * 1e-3, 1e-300)
        w = 1.0 / np.maximum(se_log, floor_val) ** 2
    sw = w.sum()
    xb = (w * x).sum() / sw
    yb = (w * y).sum() / sw
    sxx = (w * (x - xb) ** 2).sum()
    slope = float((w * (x - xb) * (y - yb)).sum() / sxx)
    if np.all(se_log == 0):
        resid = y - (yb + slope * (x - xb))
        dof = max(len(x) - 2, 1)
        slope_se = float(np.sqrt((resid**2).sum() / dof / ((x - xb) ** 2).sum()))
    else:
        slope_se = float(np.sqrt(1.0 / sxx))
    return ExponentFit(
        slope=slope,
        slope_se=slope_se,
        n_scales=tuple(int(v) for v in n),
        dropped=dropped,
    )
