"""Scalar parameters, exponent bookkeeping, and admissibility checks.

The deterministic closure of the two-color system is controlled by a tuple
(p_X, q_X, s1, s2, theta, sigma, eps) of exponents.  This module evaluates
the full list of strict inequalities that make such a tuple admissible, with
every infinitesimal loss materialized as the single knob `eps`, and scans a
grid for witnesses.

Two Strichartz regimes appear:

* case F (fractional, 12/13 < alpha < 1): pairs p_X > 4, q_X > 3 with
  2/p_X + 3/q_X < 3/2, chosen near (4, 3);
* case W (wave endpoint, alpha = 1): the fixed pair (8, 8/3).

Derived exponents:

    kappa_X = 3/2 - 3/q_X - alpha/p_X
    kappa_Y = (3 - alpha)/4
    rho_V   = 7*alpha/2 - 3        (stored without the loss; losses live in eps)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .dispersion import DispersionParams

__all__ = [
    "ExponentBook",
    "Violation",
    "AdmissibilityVerdict",
    "WindowScan",
    "derived_exponents",
    "check_admissible",
    "scan_window",
]


def derived_exponents(params: DispersionParams, p_x, q_x):
    """Return (kappa_X, kappa_Y, rho_V) for the given Strichartz pair.

    Accepts Fractions (or ints) for exact arithmetic; floats work too.
    """
    if p_x <= 0 or q_x <= 0:
        raise ValueError("p_X and q_X must be positive")
    if p_x < 2 or q_x < 2:
        raise ValueError("p_X and q_X must be >= 2")
    exact = isinstance(p_x, (Fraction, int)) and isinstance(q_x, (Fraction, int))
    if exact:
        alpha = Fraction(params.alpha)
        p, q = Fraction(p_x), Fraction(q_x)
        kappa_x = Fraction(3, 2) - 3 / q - alpha / p
        kappa_y = (3 - alpha) / 4
        rho_v = 7 * alpha / 2 - 3
        return kappa_x, kappa_y, rho_v
    alpha = params.alpha
    kappa_x = 1.5 - 3.0 / q_x - alpha / p_x
    kappa_y = (3.0 - alpha) / 4.0
    rho_v = 3.5 * alpha - 3.0
    return kappa_x, kappa_y, rho_v


@dataclass(frozen=True)
class ExponentBook:
    """All bookkeeping exponents for one parameter choice."""

    s1: float
    s2: float
    theta: float
    sigma_work: float
    eps: float
    p_x: float
    q_x: float
    kappa_x: float
    kappa_y: float
    rho_v: float

    def __post_init__(self):
        alpha_free = ("kappa_x",)  # kappa_x depends only on (p_x, q_x, alpha)
        del alpha_free
        if self.p_x <= 0 or self.q_x <= 0:
            raise ValueError("p_X and q_X must be positive")

    @classmethod
    def build(
        cls,
        params: DispersionParams,
        s1: float,
        s2: float,
        theta: float,
        sigma_work: float,
        eps: float,
        p_x,
        q_x,
    ) -> "ExponentBook":
        kx, ky, rv = derived_exponents(params, float(p_x), float(q_x))
        return cls(
            s1=float(s1),
            s2=float(s2),
            theta=float(theta),
            sigma_work=float(sigma_work),
            eps=float(eps),
            p_x=float(p_x),
            q_x=float(q_x),
            kappa_x=kx,
            kappa_y=ky,
            rho_v=rv,
        )


@dataclass(frozen=True)
class Violation:
    name: str
    statement: str
    slack: float


@dataclass(frozen=True)
class AdmissibilityVerdict:
    admissible: bool
    violations: tuple
    slacks: dict

    def violated_names(self):
        return [v.name for v in self.violations]


def _inequalities(params: DispersionParams, book: ExponentBook):
    """All strict conditions as (name, statement, slack); slack > 0 means satisfied."""
    a = params.alpha
    s1, s2 = book.s1, book.s2
    th, sg, e = book.theta, book.sigma_work, book.eps
    p = book.p_x
    rho_v = book.rho_v

    conds = [
        ("eps_positive", "eps > 0", e),
        ("order_s1_positive", "0 < s1", s1),
        ("order_s1_s2", "s1 < s2", s2 - s1),
        ("order_s2_alpha", "s2 < alpha", a - s2),
        ("theta_low", "0 < theta", th),
        ("theta_high", "theta < 1", 1.0 - th),
        ("sigma_low", "3 - 3*alpha + 10*eps < sigma", sg - (3 - 3 * a + 10 * e)),
        ("sigma_high", "sigma < min(s1, s2, rho_V)", min(s1, s2, rho_v) - sg),
        (
            "random_operator_s2",
            "s2 < 4*alpha - 3 - (3/2)*theta - eps",
            (4 * a - 3 - 1.5 * th - e) - s2,
        ),
        (
            "random_operator_shell",
            "3 - 4*alpha + theta*(s2 + eps) < 0",
            -(3 - 4 * a + th * (s2 + e)),
        ),
        ("low_high_s1", "s1 < 2*alpha - 3/2 - eps", (2 * a - 1.5 - e) - s1),
        ("low_high_s2_lower", "s2 > 3/2 - alpha + eps", s2 - (1.5 - a + e)),
        (
            "low_high_s2_upper",
            "s2 < s1 + 2*alpha - 3/2 - eps",
            (s1 + 2 * a - 1.5 - e) - s2,
        ),
        ("cubic_source", "s2 < 11*alpha/2 - 9/2 - eps", (5.5 * a - 4.5 - e) - s2),
        (
            "quadratic_xx",
            "s2 < 2*s1 + alpha + 2*alpha/p_X - 3/2 - eps",
            (2 * s1 + a + 2 * a / p - 1.5 - e) - s2,
        ),
        (
            "quadratic_xy",
            "s1 > 3/2 - 5*alpha/4 - alpha/p_X + eps",
            s1 - (1.5 - 1.25 * a - a / p + e),
        ),
    ]
    conds.append(("strichartz_pair", _pair_statement(a), _pair_slack(a, book.p_x, book.q_x)))
    return conds


def _pair_statement(alpha: float) -> str:
    if alpha == 1.0:
        return "(p_X, q_X) = (8, 8/3) (wave endpoint pair)"
    return "p_X > 4, q_X > 3, 2/p_X + 3/q_X < 3/2 (fractional pair)"


def _pair_slack(alpha: float, p: float, q: float) -> float:
    if alpha == 1.0:
        return -max(abs(p - 8.0), abs(q - 8.0 / 3.0)) + 1e-9
    return min(p - 4.0, q - 3.0, 1.5 - (2.0 / p + 3.0 / q))


def check_admissible(params: DispersionParams, book: ExponentBook) -> AdmissibilityVerdict:
    """Evaluate every admissibility inequality; inadmissibility is a result.

    Returns the verdict with each failing inequality named and its slack
    (slack > 0 means satisfied, <= 0 violated; strict inequalities).
    """
    conds = _inequalities(params, book)
    slacks = {name: slack for name, _, slack in conds}
    violations = tuple(
        Violation(name, stmt, slack) for name, stmt, slack in conds if slack <= 0
    )
    return AdmissibilityVerdict(
        admissible=not violations, violations=violations, slacks=slacks
    )


@dataclass(frozen=True)
class WindowScan:
    nonempty: bool
    alpha: float
    grid_step: float
    witness: Optional[ExponentBook] = None
    points_checked: int = 0


# documented scan ranges: s1, s2 in (0, alpha); theta in (0, 1);
# sigma_work in (0, 1); p_X in {4 + k/10 : k = 1..20} union {8};
# eps in {1e-3, 1e-2} (every constraint is monotone in eps, so the
# smallest value is scanned first).
_P_GRID = [4.0 + k / 10.0 for k in range(1, 21)] + [8.0]
_EPS_GRID = [1e-3, 1e-2]


def _first_grid_above(lo: float, g: float) -> int:
    """Smallest k with k*g strictly above lo."""
    return int(math.floor(lo / g + 1e-12)) + 1


def _last_grid_below(hi: float, g: float) -> int:
    """Largest k with k*g strictly below hi."""
    return int(math.ceil(hi / g - 1e-12)) - 1


def scan_window(alpha: float, grid_step: float = 1e-3) -> WindowScan:
    """Exhaustive grid scan for an admissible tuple at the given alpha.

    Equivalent to the full product scan over (s1, s2, theta, sigma_work,
    eps, p_X): for fixed (p_X, eps, theta, s1) the remaining constraints on
    s2 and sigma_work are intervals, so their grids are searched by interval
    arithmetic.  The first witness (in the fixed scan order) is re-verified
    through check_admissible before being returned.
    """
    if not (0.0 < grid_step <= 1e-2):
        raise ValueError("grid_step must lie in (0, 1e-2]")
    params = DispersionParams(alpha=alpha, c1=1.0, c2=2.0)
    g = grid_step
    theta_grid = np.arange(1, int(round(1.0 / g)), dtype=np.int64) * g
    s1_grid = np.arange(1, int(math.ceil(alpha / g)), dtype=np.int64) * g
    s1_grid = s1_grid[s1_grid < alpha]
    rho_v = 3.5 * alpha - 3.0
    checked = 0

    pair_choices = []
    for p in _P_GRID:
        if alpha == 1.0:
            if p == 8.0:
                pair_choices.append((p, 8.0 / 3.0))
            else:
                continue  # case F pairs are not used at the wave endpoint
        else:
            q = 3.0 + g  # any q_X > 3 satisfies the fractional pair condition
            pair_choices.append((p, q))

    for p, q in pair_choices:
        for e in _EPS_GRID:
            # s1 window independent of theta
            s1_hi = 2 * alpha - 1.5 - e
            s1_lo = 1.5 - 1.25 * alpha - alpha / p + e
            ok_s1 = (s1_grid < s1_hi) & (s1_grid > s1_lo)
            if not ok_s1.any():
                continue
            s1s = s1_grid[ok_s1]
            for th in theta_grid:
                checked += 1
                # s2 interval for each s1 (strict bounds)
                lo = np.maximum(1.5 - alpha + e, s1s)
                hi = np.minimum.reduce(
                    [
                        np.full_like(s1s, alpha),
                        np.full_like(s1s, 4 * alpha - 3 - 1.5 * th - e),
                        s1s + 2 * alpha - 1.5 - e,
                        np.full_like(s1s, 5.5 * alpha - 4.5 - e),
                        2 * s1s + alpha + 2 * alpha / p - 1.5 - e,
                        np.full_like(s1s, (4 * alpha - 3) / th - e),
                    ]
                )
                k_lo = np.floor(lo / g + 1e-12).astype(np.int64) + 1
                k_hi = np.ceil(hi / g - 1e-12).astype(np.int64) - 1
                feasible = k_lo <= k_hi
                if not feasible.any():
                    continue
                for idx in np.nonzero(feasible)[0]:
                    s1 = float(s1s[idx])
                    # largest admissible s2 maximizes the sigma window
                    s2 = k_hi[idx] * g
                    sig_lo = 3 - 3 * alpha + 10 * e
                    sig_hi = min(s1, s2, rho_v, 1.0)
                    m_lo = _first_grid_above(max(sig_lo, 0.0), g)
                    m_hi = _last_grid_below(sig_hi, g)
                    if m_lo > m_hi:
                        continue
                    book = ExponentBook.build(
                        params, s1, s2, float(th), m_lo * g, e, p, q
                    )
                    verdict = check_admissible(params, book)
                    if verdict.admissible:
                        return WindowScan(
                            nonempty=True,
                            alpha=alpha,
                            grid_step=g,
                            witness=book,
                            points_checked=checked,
                        )
    return WindowScan(nonempty=False, alpha=alpha, grid_step=g, points_checked=checked)
