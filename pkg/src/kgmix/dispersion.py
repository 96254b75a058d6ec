"""Dispersion relations, Duhamel kernels, and phase combinations.

The two field components ("colors") propagate with

    omega_i(n) = (1 + c_i^2 |n|^(2 alpha))^(1/2),   i = 1, 2,

on the integer lattice Z^3.  Everything here is a pure function of the
frequency vectors; |n|^2 is computed in exact integer arithmetic before any
floating-point operation, and |n|^(2 alpha) is evaluated as
exp(alpha * log(|n|^2)) with the zero mode special-cased so that alpha = 1
stays exact on integer squares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DispersionParams",
    "norm_sq",
    "omega",
    "omega_from_norm_sq",
    "duhamel_kernel",
    "duhamel_kernel_from_norm_sq",
    "phase_pm",
    "three_phase",
    "high_freq_split",
]


@dataclass(frozen=True)
class DispersionParams:
    """Physical triple (alpha, c1, c2) defining both dispersion relations."""

    alpha: float
    c1: float
    c2: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.c1 <= 0.0 or self.c2 <= 0.0:
            raise ValueError("speeds c1, c2 must be positive")

    @property
    def speeds_distinct(self) -> bool:
        """Gates every speed-gap audit: the two-sided phase gap needs c1 != c2."""
        return self.c1 != self.c2

    def speed(self, color: int) -> float:
        if color == 1:
            return self.c1
        if color == 2:
            return self.c2
        raise ValueError(f"color must be 1 or 2, got {color}")


def norm_sq(n) -> np.ndarray:
    """Exact |n|^2 for integer vectors with shape (..., 3)."""
    a = np.asarray(n)
    if a.shape[-1] != 3:
        raise ValueError("frequency vectors must have a trailing axis of length 3")
    if np.issubdtype(a.dtype, np.integer):
        a = a.astype(np.int64)
        return a[..., 0] ** 2 + a[..., 1] ** 2 + a[..., 2] ** 2
    return a[..., 0] ** 2 + a[..., 1] ** 2 + a[..., 2] ** 2


def _radial_pow(nsq, alpha: float) -> np.ndarray:
    """|n|^(2 alpha) from |n|^2, with the |n| = 0 branch special-cased."""
    nsq = np.asarray(nsq, dtype=np.float64)
    if alpha == 1.0:
        return nsq
    out = np.zeros_like(nsq)
    pos = nsq > 0
    np.exp(alpha * np.log(nsq, where=pos, out=np.zeros_like(nsq)), where=pos, out=out)
    return out


def omega_from_norm_sq(params: DispersionParams, color: int, nsq) -> np.ndarray:
    c = params.speed(color)
    return np.sqrt(1.0 + c * c * _radial_pow(nsq, params.alpha))


def omega(params: DispersionParams, color: int, n) -> np.ndarray:
    """Dispersion value (1 + c_i^2 |n|^(2 alpha))^(1/2); always >= 1."""
    return omega_from_norm_sq(params, color, norm_sq(n))


def duhamel_kernel_from_norm_sq(params, color, tau, nsq) -> np.ndarray:
    w = omega_from_norm_sq(params, color, nsq)
    return np.sin(np.asarray(tau, dtype=np.float64) * w) / w


def duhamel_kernel(params: DispersionParams, color: int, tau, n) -> np.ndarray:
    """Mild-solution propagator factor sin(tau * omega) / omega.

    Satisfies |K| <= min(|tau|, 1/omega) and K(0, n) = 0.
    """
    return duhamel_kernel_from_norm_sq(params, color, tau, norm_sq(n))


def phase_pm(params: DispersionParams, i: int, j: int, q, l):
    """Two-frequency phases (omega_i(q+l) - omega_j(l), omega_i(q+l) + omega_j(l)).

    The minus branch carries the speed gap when i != j; the plus branch is
    always >= 2 since each dispersion value is >= 1.
    """
    q = np.asarray(q)
    l = np.asarray(l)
    wi = omega(params, i, q + l)
    wj = omega(params, j, l)
    return wi - wj, wi + wj


def three_phase(params: DispersionParams, i: int, sigma, n, k) -> np.ndarray:
    """Signed three-frequency combination

        sigma_0 * omega_i(n) + sigma_1 * omega_1(k) + sigma_2 * omega_2(n - k).

    Negating all three signs negates the value exactly.
    """
    s0, s1, s2 = (int(s) for s in sigma)
    if abs(s0) != 1 or abs(s1) != 1 or abs(s2) != 1:
        raise ValueError("sigma must be a vector of signs +-1")
    n = np.asarray(n)
    k = np.asarray(k)
    return (
        s0 * omega(params, i, n)
        + s1 * omega(params, 1, k)
        + s2 * omega(params, 2, n - k)
    )


def high_freq_split(params: DispersionParams, color: int, x):
    """Split omega_c(x) = c|x|^alpha + remainder, exactly.

    The remainder is evaluated through the algebraic identity
    omega - c|x|^alpha = 1 / (omega + c|x|^alpha), which keeps the
    decomposition exact to floating precision and makes the bound
    0 <= remainder <= c^(-1) |x|^(-alpha) immediate.  Requires |x| >= 1.
    """
    nsq = norm_sq(x)
    if np.any(np.asarray(nsq) < 1):
        raise ValueError("high_freq_split requires |x| >= 1")
    c = params.speed(color)
    leading = c * np.sqrt(_radial_pow(nsq, params.alpha))
    w = omega_from_norm_sq(params, color, nsq)
    remainder = 1.0 / (w + leading)
    return leading, remainder
