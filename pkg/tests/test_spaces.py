import numpy as np
import pytest
from hypothesis import given, strategies as st

from rrmfem.exceptions import PreconditionError
from rrmfem.mesh import RectGrid, build_nonuniform_pattern, build_uniform
from rrmfem.spaces import (build_constraints_mc, build_constraints_rrm, build_dofmap,
                           build_mc_basis, build_rrm_basis, expected_dims, membership_rrm,
                           numerical_rank, rrm_patches, verify_exact_sequence, wilson_dofmap)


def wilson_interpolant(grid, u, homogeneous=False):
    """Wilson coefficients with vertex values of ``u`` and zero bubbles."""
    dm = wilson_dofmap(grid, homogeneous)
    vnum = dm.info["vertex_numbering"]
    coef = np.zeros(dm.n_dofs)
    xy = grid.entities.vertex_xy
    keep = vnum >= 0
    coef[vnum[keep]] = u(xy[keep, 0], xy[keep, 1])
    return dm, coef


def random_grid(rng, m, n):
    xs = np.r_[0.0, np.sort(rng.uniform(0.05, 0.95, m - 1)), 1.0]
    ys = np.r_[0.0, np.sort(rng.uniform(0.05, 0.95, n - 1)), 1.0]
    return RectGrid(np.unique(xs), np.unique(ys))


def test_expected_dims_formulas():
    d = expected_dims(3, 3)
    assert d == {"dim_wilson": 22, "n_constraints": 12, "dim_rrm": 10,
                 "dim_mc_hom": 13, "dim_mc": 30}


@given(st.integers(2, 5), st.integers(2, 5))
def test_rrm_basis_dimension_and_constraints(m, n):
    g = build_uniform(m, n)
    basis = build_rrm_basis(g)
    B = build_constraints_rrm(g)
    assert len(basis) == m * n + 1 == len(rrm_patches(m, n))
    assert basis.rank() == m * n + 1
    assert numerical_rank(B) == 2 * m * n - m - n
    assert abs(B @ basis.matrix).max() < 1e-10


def test_rrm_basis_on_random_nonuniform_grid(rng):
    g = random_grid(rng, 4, 3)
    basis = build_rrm_basis(g)
    assert len(basis) == 13 and basis.rank() == 13
    assert all(membership_rrm(basis.column(k), g) for k in range(len(basis)))


def test_basis_vectors_are_normalised():
    basis = build_rrm_basis(build_uniform(3, 4))
    Z = basis.matrix.toarray()
    idx = np.argmax(np.abs(Z), axis=0)
    assert np.allclose(Z[idx, np.arange(Z.shape[1])], 1.0)


def test_rrm_basis_preconditions():
    with pytest.raises(PreconditionError):
        build_rrm_basis(build_uniform(1, 3))
    with pytest.raises(PreconditionError):
        build_rrm_basis(build_uniform(4, 4, "l-shape"))


def test_affine_functions_belong_to_rrm():
    g = build_uniform(3, 4)
    _, coef = wilson_interpolant(g, lambda x, y: 2 * x - y + 0.5)
    B = build_constraints_rrm(g, wilson_dofmap(g, False))
    assert membership_rrm(coef, g, B)


def test_membership_rejects_generic_vector(rng):
    g = build_uniform(3, 3)
    dm = wilson_dofmap(g)
    assert not membership_rrm(rng.normal(size=dm.n_dofs), g)
    with pytest.raises(PreconditionError):
        membership_rrm(np.zeros(dm.n_dofs + 1), g)


def test_rrm_dimension_via_constraint_rank_l_shape():
    g = build_uniform(4, 4, "l-shape")
    wilson = wilson_dofmap(g)
    B = build_constraints_rrm(g, wilson)
    dim = wilson.n_dofs - numerical_rank(B)
    assert dim > 0
    assert B.shape[0] == len(g.entities.interior_edges)


@given(st.integers(2, 5), st.integers(2, 5), st.booleans())
def test_mc_basis_dimension(m, n, homogeneous):
    g = build_uniform(m, n)
    basis = build_mc_basis(g, homogeneous)
    d = expected_dims(m, n)
    assert len(basis) == (d["dim_mc_hom"] if homogeneous else d["dim_mc"])
    assert basis.rank() == len(basis)
    C = build_constraints_mc(g, basis.dofmap, homogeneous)
    assert abs(C @ basis.matrix).max() < 1e-12


def test_mc_basis_spans_constraint_kernel():
    g = build_uniform(3, 2)
    for homogeneous in (True, False):
        basis = build_mc_basis(g, homogeneous)
        C = build_constraints_mc(g, basis.dofmap, homogeneous)
        assert basis.dofmap.n_dofs - numerical_rank(C) == len(basis)


def test_mc_single_cell():
    basis = build_mc_basis(build_uniform(1, 1), homogeneous=False)
    assert len(basis) == 6


@pytest.mark.parametrize("grid", [build_uniform(4, 3), build_nonuniform_pattern(2)])
def test_exact_sequence(grid):
    report = verify_exact_sequence(build_rrm_basis(grid), grid)
    assert report["n_functions"] == grid.m * grid.n + 1
    assert report["max_violation"] < 1e-10


def test_dofmap_evaluate_reproduces_affine(rng):
    g = build_uniform(3, 2)
    dm, coef = wilson_interpolant(g, lambda x, y: 1 + x + 3 * y)
    x, y = rng.uniform(0, 1, 10), rng.uniform(0, 1, 10)
    assert np.allclose(dm.evaluate(coef, x, y), 1 + x + 3 * y)
    gx, gy = dm.gradient(coef, x, y)
    assert np.allclose(gx, 1) and np.allclose(gy, 3)
    assert np.isnan(dm.evaluate(coef, [2.0], [0.5])).all()


def test_dofmap_sizes():
    g = build_uniform(3, 2)
    ent = g.entities
    assert build_dofmap("q1", g).n_dofs == 2
    assert build_dofmap("q1", g, False).n_dofs == 12
    assert build_dofmap("wilson", g).n_dofs == 2 + 12
    assert build_dofmap("rm", g).n_dofs == 2 + ent.n_edges
    assert build_dofmap("rm", g, False).n_dofs == 12 + ent.n_edges
    assert build_dofmap("mc", g).n_dofs == 36
    with pytest.raises(PreconditionError):
        build_dofmap("p3", g)
