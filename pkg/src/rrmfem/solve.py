"""Source and eigenvalue solvers: saddle-point, reduced basis and plain nodal."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss

from .assembly import DENSE_LIMIT, AssembledSystem, ReducedSystem
from .exceptions import NumericalError, PreconditionError
from .local import monomials_grad
from .mesh import RectGrid
from .spaces import numerical_rank, rm_dofmap

log = logging.getLogger(__name__)


@dataclass
class SaddleSolution:
    u: np.ndarray
    delta: np.ndarray
    residual: float
    constraint_residual: float


@dataclass
class EigenResult:
    """Smallest eigenpairs; ``vectors`` are M-orthonormal columns.

    ``full_vectors`` holds the same eigenfunctions over the carrier DOFs
    (Wilson coefficients for RRM).
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    full_vectors: np.ndarray
    meta: dict = field(default_factory=dict)


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _kkt(sys: AssembledSystem) -> sp.csc_matrix:
    if sys.B is None:
        raise PreconditionError("saddle-point solve needs a constraint matrix")
    B = sys.B
    nb = B.shape[0]
    return sp.bmat([[sys.K, B.T], [B, sp.csr_matrix((nb, nb))]], format="csc")


def _factor_kkt(sys: AssembledSystem):
    A = _kkt(sys)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        gap = sys.B.shape[0] - numerical_rank(sys.B)
        raise NumericalError(f"singular KKT matrix ({exc}); constraint rank gap {gap}") from exc
    if not np.all(np.isfinite(lu.U.diagonal())):
        raise NumericalError("KKT factorization produced non-finite pivots")
    return A, lu


def solve_source_saddle(sys: AssembledSystem) -> SaddleSolution:
    """Solve [[K, B^T], [B, 0]] [u, delta] = [F, 0] with one refinement step."""
    A, lu = _factor_kkt(sys)
    n = sys.n_dofs
    rhs = np.concatenate([sys.F, np.zeros(sys.B.shape[0])])
    x = lu.solve(rhs)
    x += lu.solve(rhs - A @ x)
    if not np.all(np.isfinite(x)):
        raise NumericalError("KKT solve produced non-finite values")
    u, delta = x[:n], x[n:]
    res = np.linalg.norm(rhs - A @ x) / max(np.linalg.norm(rhs), 1e-300)
    cres = np.abs(sys.B @ u).max(initial=0.0)
    return SaddleSolution(u, delta, float(res), float(cres))


def solve_source_reduced(red: ReducedSystem) -> np.ndarray:
    """Coefficients of the solution in the explicit basis."""
    if sp.issparse(red.K):
        try:
            factor = spla.splu(red.K.tocsc())
        except RuntimeError as exc:
            raise NumericalError(f"reduced stiffness is singular: {exc}") from exc
        return factor.solve(red.F)
    try:
        c = sla.cho_factor(red.K)
    except sla.LinAlgError as exc:
        raise NumericalError("reduced stiffness is not SPD (dependent basis?)") from exc
    return sla.cho_solve(c, red.F)


def solve_source(sys: AssembledSystem) -> np.ndarray:
    """Direct solve of K u = F for an unconstrained nodal space."""
    if sys.n_dofs == 0:
        return np.zeros(0)
    return spla.spsolve(sys.K.tocsc(), sys.F)


def eig_smallest(red: ReducedSystem, k: int) -> EigenResult:
    """k smallest pairs of K_r c = lambda M_r c."""
    n = red.n_dofs
    if k > n or k < 1:
        raise PreconditionError(f"cannot compute {k} eigenpairs of a {n}-dimensional system")
    if not sp.issparse(red.K) and n <= DENSE_LIMIT:
        try:
            lam, V = sla.eigh(red.K, red.M, subset_by_index=[0, k - 1])
        except sla.LinAlgError as exc:
            raise NumericalError(f"Cholesky of the reduced mass matrix failed: {exc}") from exc
        meta = {"method": "dense-cholesky", "dim": n}
    else:
        K = sp.csc_matrix(red.K)
        M = sp.csc_matrix(red.M)
        lam, V = _shift_invert(K, M, k)
        meta = {"method": "shift-invert", "dim": n}
    V = _fix_signs(V)
    return EigenResult(lam, V, red.basis.matrix @ V, meta)


def _shift_invert(K, M, k):
    # small positive shift keeps the factorization away from exact singularity
    sigma = -1e-8 * abs(K.diagonal()).sum() / max(abs(M.diagonal()).sum(), 1e-300)
    lam, V = spla.eigsh(K, k=k, M=M, sigma=sigma, which="LM")
    order = np.argsort(lam)
    lam, V = lam[order], V[:, order]
    V = V / np.sqrt(np.einsum("ij,ij->j", V, M @ V))
    return lam, V


def eig_system(sys: AssembledSystem, k: int) -> EigenResult:
    """k smallest pairs of an unconstrained nodal space (Q1, Wilson, RM)."""
    n = sys.n_dofs
    if k > n or k < 1:
        raise PreconditionError(f"cannot compute {k} eigenpairs of a {n}-dimensional system")
    if n <= 1500:
        try:
            lam, V = sla.eigh(sys.K.toarray(), sys.M.toarray(), subset_by_index=[0, k - 1])
        except sla.LinAlgError as exc:
            raise NumericalError(f"mass matrix Cholesky failed: {exc}") from exc
        method = "dense-cholesky"
    else:
        lam, V = _shift_invert(sys.K.tocsc(), sys.M.tocsc(), k)
        method = "shift-invert"
    V = _fix_signs(V)
    return EigenResult(lam, V, V, {"method": method, "dim": n})


def eig_rm(sys: AssembledSystem, k: int) -> EigenResult:
    if sys.kind != "rm":
        raise PreconditionError("eig_rm expects an RM system")
    return eig_system(sys, k)


def eig_saddle(sys: AssembledSystem, k: int) -> EigenResult:
    """Constrained eigenpairs through shift-invert on the KKT operator.

    Each iteration solves [[K, B^T], [B, 0]] [u, d] = [M v, 0], which maps
    into ker(B) and is self-adjoint in the M inner product there.
    """
    A, lu = _factor_kkt(sys)
    n = sys.n_dofs
    nb = sys.B.shape[0]
    dim = n - nb
    if k > dim:
        raise PreconditionError(f"cannot compute {k} eigenpairs of a {dim}-dimensional space")

    def apply(b):
        x = lu.solve(np.concatenate([np.ravel(b), np.zeros(nb)]))
        return x[:n]

    opinv = spla.LinearOperator((n, n), matvec=apply, dtype=float)
    v0 = apply(sys.M @ np.ones(n))
    lam, V = spla.eigsh(sys.K, k=k, M=sys.M, sigma=0.0, OPinv=opinv, which="LM", v0=v0)
    order = np.argsort(lam)
    lam, V = lam[order], V[:, order]
    V = V / np.sqrt(np.einsum("ij,ij->j", V, sys.M @ V))
    V = _fix_signs(V)
    meta = {"method": "kkt-shift-invert", "dim": dim,
            "constraint_residual": float(np.abs(sys.B @ V).max())}
    return EigenResult(lam, V, V, meta)


# ---------------------------------------------------------------------------
# RM interpolation diagnostic

def rm_interpolant(grid: RectGrid, u, grad_u, n_gauss: int = 2):
    """Nodal RM interpolant: vertex values and edge means of the normal derivative.

    Edge means use an ``n_gauss``-point Gauss rule.  Returns (dofmap, coefficients)
    on the non-homogeneous RM space.
    """
    dm = rm_dofmap(grid, homogeneous=False)
    ent = grid.entities
    nv = dm.info["n_vertex_dofs"]
    vals = np.zeros(dm.n_dofs)
    vals[:nv] = u(ent.vertex_xy[:, 0], ent.vertex_xy[:, 1])
    x, w = leggauss(n_gauss)
    params = 0.5 * (x + 1)
    a = ent.vertex_xy[ent.edge_vertices[:, 0]]
    b = ent.vertex_xy[ent.edge_vertices[:, 1]]
    P = a[:, None, :] + params[None, :, None] * (b - a)[:, None, :]
    gx, gy = grad_u(P[..., 0], P[..., 1])
    normal = np.where(ent.edge_vertical[:, None], gx, gy)
    vals[nv:] = 0.5 * normal @ w
    return dm, vals


def rm_interpolant_diagnostic(u, grad_u, grid: RectGrid, order: int = 6,
                              n_gauss: int = 2) -> dict:
    """a_h(u - Pi u, Pi u) for the RM interpolant, and its ratio to h^2."""
    dm, pi = rm_interpolant(grid, u, grad_u, n_gauss)
    x0, y0, hx, hy = dm.cell_geometry
    C = dm.cell_coefficients(pi)
    xg, wg = leggauss(order)
    S, T = np.meshgrid(xg, xg, indexing="ij")
    S, T = S.ravel(), T.ravel()
    W = np.outer(wg, wg).ravel()
    ds, dt = monomials_grad(S, T)
    px = (C @ ds.T) * (2 / hx)[:, None]
    py = (C @ dt.T) * (2 / hy)[:, None]
    X = x0[:, None] + 0.5 * hx[:, None] * (1 + S[None])
    Y = y0[:, None] + 0.5 * hy[:, None] * (1 + T[None])
    ux, uy = grad_u(X, Y)
    wts = 0.25 * (hx * hy)[:, None] * W[None]
    value = float(np.sum(wts * ((ux - px) * px + (uy - py) * py)))
    h = grid.h
    return {"h": h, "a_h": value, "ratio": value / h ** 2}
