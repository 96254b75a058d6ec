"""Counter-based random numbers keyed by (seed, stream, mode, draw).

Every random quantity in the package is a pure function of the master seed
and a small tuple of integer labels (experiment stream, sample index, color,
lattice mode).  Modes are keyed by their integer coordinates, not by their
position in an enumeration, so a run at cutoff 2L reproduces the noise of a
run at cutoff L on the common modes, and any worker partition of the samples
produces bitwise identical output.

The generator is a SplitMix64 finalizer chain used in counter mode.  It is
not cryptographic; it is a statistically solid hash for Monte Carlo use.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# coordinate packing: 21 bits per component, biased to be nonnegative
_COORD_BIAS = 1 << 20
_COORD_BITS = 21


def _mix(z):
    """SplitMix64 finalizer on uint64 scalars or arrays (wrapping is intended)."""
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def derive_key(seed: int, *ids: int) -> np.uint64:
    """Fold a master seed and integer labels into a single uint64 key."""
    with np.errstate(over="ignore"):
        key = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        for j in ids:
            key = _mix(key + _GOLDEN + np.uint64(int(j) & 0xFFFFFFFFFFFFFFFF))
    return key


def pack_modes(modes: np.ndarray) -> np.ndarray:
    """Pack integer lattice vectors (..., 3) into uint64 codes.

    Components must satisfy |m_i| < 2**20, far beyond any cutoff used here.
    """
    m = np.asarray(modes, dtype=np.int64)
    if m.shape[-1] != 3:
        raise ValueError("modes must have a trailing axis of length 3")
    if np.any(np.abs(m) >= _COORD_BIAS):
        raise ValueError("mode coordinates out of packable range")
    c = (m + _COORD_BIAS).astype(np.uint64)
    return (
        (c[..., 0] << np.uint64(2 * _COORD_BITS))
        | (c[..., 1] << np.uint64(_COORD_BITS))
        | c[..., 2]
    )


def _uniform_pairs(key: np.uint64, codes: np.ndarray, draws: int):
    """Two open-interval uniforms per (code, draw) from one hash word.

    The 64-bit output is split into two 26-bit uniforms (resolution 2^-26,
    ample for Monte Carlo audits); one hash per Box-Muller pair.
    """
    codes = np.atleast_1d(np.asarray(codes, dtype=np.uint64))
    ctr = np.arange(draws, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(key + _GOLDEN + codes)[..., None]
        x = _mix(h + _GOLDEN + ctr)
    scale = 2.0 ** -26
    u1 = ((x >> np.uint64(38)).astype(np.float64) + 0.5) * scale
    u2 = (((x >> np.uint64(12)) & np.uint64(0x3FFFFFF)).astype(np.float64) + 0.5) * scale
    return u1, u2


def standard_normals(key: np.uint64, codes: np.ndarray, draws: int) -> np.ndarray:
    """Real standard normals, one row of `draws` values per mode code."""
    u1, u2 = _uniform_pairs(key, codes, draws)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def complex_normals(key: np.uint64, codes: np.ndarray, draws: int) -> np.ndarray:
    """Standard complex normals (E|z|^2 = 1) per mode code via Box-Muller."""
    u1, u2 = _uniform_pairs(key, codes, draws)
    r = np.sqrt(-np.log(u1))  # sqrt(-2 ln u)/sqrt(2)
    ang = 2.0 * np.pi * u2
    return r * (np.cos(ang) + 1j * np.sin(ang))


def pairwise_sum(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sum with a fixed binary-tree association order.

    Reductions over samples use this so that results do not depend on how the
    samples were partitioned across workers.
    """
    v = np.asarray(values)
    v = np.moveaxis(v, axis, 0)
    n = v.shape[0]
    if n == 0:
        return np.zeros(v.shape[1:], dtype=v.dtype)
    while n > 1:
        half = n // 2
        head = v[: 2 * half : 2] + v[1 : 2 * half : 2]
        if n % 2:
            v = np.concatenate([head, v[-1:]], axis=0)
        else:
            v = head
        n = v.shape[0]
    return v[0]
