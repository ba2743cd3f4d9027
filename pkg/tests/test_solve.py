import math

import numpy as np
import pytest
import scipy.sparse as sp

from rrmfem.assembly import ReducedSystem, assemble, reduce
from rrmfem.exceptions import PreconditionError
from rrmfem.mesh import build_nonuniform_pattern, build_uniform
from rrmfem.postproc import broken_energy, error_norms
from rrmfem.problems import EXAMPLE1, exact_eigenvalues_rectangle
from rrmfem.solve import (eig_rm, eig_saddle, eig_smallest, rm_interpolant,
                          rm_interpolant_diagnostic, solve_source_reduced, solve_source_saddle)
from rrmfem.spaces import ExplicitBasis, build_rrm_basis, membership_rrm
from rrmfem.studies import eigen_grid, solve_eigen_problem, solve_source_problem


def rrm_pair(grid, f=EXAMPLE1.f):
    sys = assemble("rrm", grid, f=f)
    return sys, reduce(sys, build_rrm_basis(grid, sys.dofmap))


def test_zero_load_gives_zero_solution():
    sys, red = rrm_pair(build_uniform(3, 3), f=0.0)
    assert np.all(solve_source_reduced(red) == 0)
    assert np.abs(solve_source_saddle(sys).u).max() == 0


def test_reduced_solution_is_in_rrm():
    g = build_uniform(3, 3)
    sys, red = rrm_pair(g)
    u = red.expand(solve_source_reduced(red))
    assert membership_rrm(u, g, sys.B)


@pytest.mark.parametrize("grid", [build_uniform(2, 2), build_uniform(5, 3),
                                  build_nonuniform_pattern(2)])
def test_saddle_and_reduced_agree(grid):
    sys, red = rrm_pair(grid)
    u_red = red.expand(solve_source_reduced(red))
    sol = solve_source_saddle(sys)
    assert sol.constraint_residual < 1e-12
    rel = broken_energy(sys.dofmap, u_red - sol.u) / broken_energy(sys.dofmap, u_red)
    assert rel < 1e-10


def test_saddle_requires_constraints():
    with pytest.raises(PreconditionError):
        solve_source_saddle(assemble("wilson", build_uniform(2, 2)))


def test_one_refinement_energy_ratio():
    errs = []
    for m in (8, 16):
        res = solve_source_problem("rrm", build_uniform(m, m))
        errs.append(error_norms(res.dofmap, res.u, EXAMPLE1.u, EXAMPLE1.grad_u)[0])
    assert 3.4 <= errs[0] / errs[1] <= 4.6


def test_one_by_one_generalized_eigenproblem():
    g = build_uniform(2, 2)
    sys = assemble("rrm", g)
    basis = ExplicitBasis(sys.dofmap, np.zeros((sys.n_dofs, 1)))
    red = ReducedSystem(np.array([[6.0]]), np.array([[2.0]]), np.zeros(1), basis, sys)
    assert eig_smallest(red, 1).eigenvalues[0] == pytest.approx(3.0)
    with pytest.raises(PreconditionError):
        eig_smallest(red, 2)


def test_eigenvectors_are_mass_orthonormal_and_signed():
    _, red = rrm_pair(build_uniform(4, 4))
    res = eig_smallest(red, 4)
    V = res.vectors
    assert np.allclose(V.T @ red.M @ V, np.eye(4), atol=1e-10)
    idx = np.argmax(np.abs(V), axis=0)
    assert np.all(V[idx, np.arange(4)] > 0)


def test_sparse_shift_invert_matches_dense():
    g = build_uniform(6, 6)
    sys = assemble("rrm", g)
    basis = build_rrm_basis(g, sys.dofmap)
    dense = eig_smallest(reduce(sys, basis), 4).eigenvalues
    sparse = eig_smallest(reduce(sys, basis, dense=False), 4).eigenvalues
    assert np.allclose(dense, sparse, rtol=1e-9)


def test_saddle_eigen_matches_reduced_on_rectangle():
    g = build_uniform(4, 6)
    sys = assemble("rrm", g)
    a = eig_smallest(reduce(sys, build_rrm_basis(g, sys.dofmap)), 5).eigenvalues
    b = eig_saddle(sys, 5).eigenvalues
    assert np.allclose(a, b, rtol=1e-10)


def test_rectangle_eigen_finest_reference_row():
    res = solve_eigen_problem("rrm", eigen_grid(0.0625, 2.0), 3)
    assert res.eigenvalues == pytest.approx([19.660, 49.034, 49.036], abs=0.002)


def test_rayleigh_identity(rng):
    _, red = rrm_pair(build_uniform(4, 4))
    res = eig_smallest(red, 1)
    lam, u1 = res.eigenvalues[0], res.vectors[:, 0]
    for _ in range(5):
        v = u1 + 0.3 * rng.normal(size=len(u1))
        v /= math.sqrt(v @ red.M @ v)
        if v @ red.M @ u1 < 0:
            v = -v
        d = v - u1
        lhs = v @ red.K @ v - lam
        rhs = d @ red.K @ d - lam * (d @ red.M @ d)
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_rm_below_rrm_below_exact():
    g = eigen_grid(0.25, 2.0)
    rrm = solve_eigen_problem("rrm", g, 6).eigenvalues
    rm = eig_rm(assemble("rm", g), 6).eigenvalues
    exact = exact_eigenvalues_rectangle(6)
    assert np.all(rm < rrm) and np.all(rrm < exact)
    with pytest.raises(PreconditionError):
        eig_rm(assemble("q1", g), 2)


def test_eigenvalues_translation_invariant():
    g = build_uniform(4, 4)
    a = solve_eigen_problem("rrm", g, 3).eigenvalues
    b = solve_eigen_problem("rrm", g.translated(3.0, -2.0), 3).eigenvalues
    assert np.allclose(a, b, rtol=1e-11)


def test_rm_interpolant_reproduces_p2():
    g = build_uniform(4, 4)
    for u, grad in [(lambda x, y: x + 0 * y, lambda x, y: (1 + 0 * x, 0 * y)),
                    (lambda x, y: x * y, lambda x, y: (y + 0 * x, x + 0 * y))]:
        assert rm_interpolant_diagnostic(u, grad, g)["a_h"] == pytest.approx(0.0, abs=1e-14)
    dm, pi = rm_interpolant(g, lambda x, y: x * y, lambda x, y: (y, x))
    pts = np.array([[0.13, 0.71], [0.5, 0.25]])
    assert np.allclose(dm.evaluate(pi, pts[:, 0], pts[:, 1]), pts[:, 0] * pts[:, 1])


def test_rm_interpolant_positive_for_mixed_quartic():
    u = lambda x, y: x * (1 - x) * y * (1 - y)
    gu = lambda x, y: ((1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y))
    r = [rm_interpolant_diagnostic(u, gu, build_uniform(m, m))["ratio"] for m in (4, 8, 16)]
    assert min(r) > 0
    assert 0.5 < r[2] / r[1] < 2.0


def test_kkt_dimension_precondition():
    sys = assemble("rrm", build_uniform(2, 2))
    with pytest.raises(PreconditionError):
        eig_saddle(sys, 6)
    assert sp.issparse(sys.B)
