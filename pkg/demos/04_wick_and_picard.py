"""Colored Wick decomposition on shared noise, and the cutoff fixed point.

The resonant cubic object gamma_1 = V_2 o psi_1 contains three Gaussian
factors: two of color 1, one of color 2.  Only the same-color pair can
contract, and what remains is a first-chaos Volterra term C_1 driven by
the *other* color's noise.  Building gamma and C_1 on one Brownian path
makes the decomposition statistically exact: gamma - C_1 is centered third
chaos, orthogonal to every first-chaos functional.

The last section runs the Galerkin Picard iteration of the cutoff system
and shows the contraction of successive differences at short horizon.
"""

import numpy as np

from kgmix import DispersionParams, CutoffProfile
from kgmix.gaussian_lift import FieldEnsemble, TimeGrid
from kgmix.picard import cutoff_convergence_report, simulate_cutoff_system
from kgmix.wick import decomposition_audit

params = DispersionParams(alpha=1.0, c1=1.0, c2=2.0)
profile = CutoffProfile()

print("== decomposition audit on shared noise (small scale)")
grid = TimeGrid(1.0, 96)
ens = FieldEnsemble(params, profile, grid, lam=4, master_seed=3, n_samples=250, mode="increment")
rep = decomposition_audit(
    ens, ens, n_samples=250,
    audit_n=((1, 0, 0), (2, 0, 0)),
    mean_zero_pts=np.array([[0, 0, 0], [1, 1, 0]]),
)
print(f"  Ito isometry        z = {np.max(rep.isometry['z']):.2f}  (gate 4)")
print(f"  covariance check    z = {np.max(rep.covariance_check['z']):.2f}")
print(f"  orthogonality (2)   z = {np.max(rep.orthogonality_color2['z']):.2f}")
print(f"  orthogonality (1)   z = {np.max(rep.orthogonality_color1['z']):.2f}")
print(f"  mean zero           z = {rep.mean_zero['max_z']:.2f}")
print(f"  all passed: {rep.passed}")

print("\n== Picard iteration of the cutoff system, horizon 1/4")
pgrid = TimeGrid(0.25, 48)
state = simulate_cutoff_system(params, profile, pgrid, lam=8, master_seed=11, tol=1e-12)
print(f"  iterations: {state.iterations}, converged: {state.converged}")
for it, d in enumerate(state.diffs):
    print(f"  iter {it}: sup-mode successive difference {d:.3e}")

print("\n== cutoff-to-cutoff stability on shared noise")
states = {
    lam: simulate_cutoff_system(params, profile, TimeGrid(0.25, 96), lam=lam, master_seed=11, tol=1e-12)
    for lam in (4, 8, 16)
}
for lam in (4, 8):
    cmp = cutoff_convergence_report(states[lam], states[16])
    print(f"  cutoff {lam:2d} vs 16: common-mode sup difference {cmp.common_sup:.4e}")
