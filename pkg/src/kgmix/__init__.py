"""Desk-scale numerical audits for a two-color multispeed fractional
Klein-Gordon system on the 3-torus.

The package constructs the model's stochastic objects and random-operator
kernels at finite Fourier cutoff and verifies, by deterministic lattice sums
and seeded Monte Carlo, the claims that are checkable at laptop scale:
phase gaps, layer counts, variance exponents, contraction shells, Wick
orthogonality, and parameter windows.
"""

from .dispersion import (
    DispersionParams,
    omega,
    duhamel_kernel,
    phase_pm,
    three_phase,
    high_freq_split,
)
from .params import (
    ExponentBook,
    derived_exponents,
    check_admissible,
    scan_window,
)
from .lattice import (
    CutoffProfile,
    DyadicShell,
    enumerate_shell,
    phase_gap_audit,
    same_speed_contrast,
    phase_layer_count,
    low_output_gap_audit,
)

__version__ = "0.1.0"
