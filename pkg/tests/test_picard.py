"""Galerkin Picard iteration and cutoff/grid stability."""

import numpy as np
import pytest

from kgmix.dispersion import DispersionParams
from kgmix.lattice import CutoffProfile
from kgmix.gaussian_lift import FieldEnsemble, TimeGrid
from kgmix.picard import (
    _duhamel,
    _galerkin_product,
    cutoff_convergence_report,
    simulate_cutoff_system,
)

P12 = DispersionParams(1.0, 1.0, 2.0)
PROF = CutoffProfile()
GRID = TimeGrid(0.25, 48)


def test_zero_state_is_fixed_point():
    # with zero linear fields the iteration map returns zero exactly
    ens = FieldEnsemble(P12, PROF, GRID, lam=4, master_seed=1, n_samples=1, mode="increment")
    zero = np.zeros((len(ens.modes), GRID.n_steps + 1), dtype=complex)
    prod = _galerkin_product(ens.modes, zero, zero, 4)
    assert np.all(prod == 0)
    assert np.all(_duhamel(P12, 1, ens.modes, GRID, prod) == 0)


def test_decoupled_equals_linear_fields_bitwise():
    st = simulate_cutoff_system(P12, PROF, GRID, lam=8, master_seed=99, coupled=False)
    ens = FieldEnsemble(P12, PROF, GRID, lam=8, master_seed=99, n_samples=1, mode="increment")
    smp = ens.sample(0)
    assert all(np.array_equal(st.u[c], smp.psi[c]) for c in (1, 2))


def test_coupled_contraction():
    st = simulate_cutoff_system(P12, PROF, GRID, lam=8, master_seed=99, tol=1e-12)
    assert st.converged and not st.non_contractive
    ratios = [b / a for a, b in zip(st.diffs, st.diffs[1:])]
    assert all(r < 1 for r in ratios)
    assert all(d2 < d1 for d1, d2 in zip(st.diffs, st.diffs[1:]))
    # iterates stay Hermitian: u(-n) = conj(u(n))
    rows = {tuple(m): r for r, m in enumerate(map(tuple, st.modes))}
    for mode in [(1, 2, 0), (0, -1, 3)]:
        a = st.u[1][rows[mode]]
        b = st.u[1][rows[tuple(-np.array(mode))]]
        assert np.allclose(a, np.conj(b), rtol=0, atol=1e-15)


def test_identical_cutoffs_zero_difference():
    st = simulate_cutoff_system(P12, PROF, GRID, lam=4, master_seed=5, tol=1e-12)
    rep = cutoff_convergence_report(st, st)
    assert rep.common_sup == 0.0


def test_cutoff_comparison_requires_shared_noise():
    a = simulate_cutoff_system(P12, PROF, GRID, lam=4, master_seed=5, tol=1e-10)
    b = simulate_cutoff_system(P12, PROF, GRID, lam=8, master_seed=6, tol=1e-10)
    with pytest.raises(ValueError, match="same noise"):
        cutoff_convergence_report(a, b)


def test_cutoff_comparison_common_modes():
    a = simulate_cutoff_system(P12, PROF, GRID, lam=4, master_seed=5, tol=1e-12)
    b = simulate_cutoff_system(P12, PROF, GRID, lam=8, master_seed=5, tol=1e-12)
    rep = cutoff_convergence_report(a, b)
    assert rep.common_sup > 0
    assert set(rep.shell_sup) == {2, 4, 8}


def test_grid_refinement_shared_path():
    runs = {}
    for mult, fine in ((1, 4), (2, 2), (4, 1)):
        runs[mult] = simulate_cutoff_system(
            P12, PROF, TimeGrid(0.25, 48 * mult), lam=4,
            master_seed=5, tol=1e-12, noise_fine_factor=fine,
        )
    d1 = float(np.abs(runs[1].u[1][:, -1] - runs[2].u[1][:, -1]).max())
    d2 = float(np.abs(runs[2].u[1][:, -1] - runs[4].u[1][:, -1]).max())
    assert d1 <= 5.0 * d2 / 0.75
    assert d2 < d1
