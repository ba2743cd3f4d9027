"""Global degree-of-freedom maps, constraint matrices and explicit bases.

Wilson-type spaces number the (free) vertices first and then two bubble
DOFs per cell.  The bubble DOFs are coefficients of ``phi_xx / xi^2`` and
``phi_yy / eta^2`` so that every coefficient is O(1) independent of h.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .exceptions import NumericalError, PreconditionError
from .local import (BUBBLE_SHIFT, N_MONO, THETA1, THETA2, edge_derivative_means_ref,
                    monomials, monomials_grad, q1_ref, rm_coefficients, wilson_ref)
from .mesh import BOTTOM, LEFT, RIGHT, TOP, RectGrid

KINDS = ("q1", "wilson", "mc", "rm", "rrm")
RANK_RTOL = 1e-9
MEMBERSHIP_TOL = 1e-9


@dataclass(eq=False)
class DofMap:
    """Local-to-global map of a piecewise polynomial space.

    ``coeffs[k, j]`` holds the monomial coefficients of local basis function
    ``j`` on cell ``k``; ``cell_dofs[k, j]`` is its global DOF or -1 when the
    DOF is removed by a boundary condition.
    """

    kind: str
    grid: RectGrid
    cell_dofs: np.ndarray
    coeffs: np.ndarray
    n_dofs: int
    homogeneous: bool = True
    info: dict = field(default_factory=dict)

    @property
    def n_cells(self) -> int:
        return len(self.cell_dofs)

    @cached_property
    def cell_geometry(self):
        """Arrays x0, y0, hx, hy of the active cells in entity order."""
        ij = self.grid.entities.cell_ij
        g = self.grid
        return (g.xs[ij[:, 0]], g.ys[ij[:, 1]], g.widths[ij[:, 0]], g.heights[ij[:, 1]])

    @cached_property
    def to_monomials(self) -> sp.csr_matrix:
        """Sparse map from global DOFs to stacked per-cell monomial coefficients."""
        nc, nloc = self.cell_dofs.shape
        rows = (8 * np.arange(nc)[:, None, None] + np.arange(N_MONO)[None, None, :])
        rows = np.broadcast_to(rows, (nc, nloc, N_MONO))
        cols = np.broadcast_to(self.cell_dofs[:, :, None], (nc, nloc, N_MONO))
        vals = self.coeffs
        keep = (cols >= 0) & (vals != 0)
        T = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(N_MONO * nc, self.n_dofs))
        return T.tocsr()

    def cell_coefficients(self, u) -> np.ndarray:
        """Monomial coefficients ``(ncell, 8)`` of the global function ``u``."""
        return (self.to_monomials @ np.asarray(u, dtype=float)).reshape(-1, N_MONO)

    @cached_property
    def edge_derivative_means(self) -> sp.csr_matrix:
        """Row ``4k + l``: mean of d/dx (vertical) or d/dy (horizontal) on local edge l of cell k."""
        x0, y0, hx, hy = self.cell_geometry
        E = edge_derivative_means_ref()  # (4, 8) in s/t derivatives
        scale = np.stack([2 / hx, 2 / hy, 2 / hx, 2 / hy], axis=1)  # (nc, 4)
        local = scale[:, :, None] * np.einsum("lr,kjr->klj", E, self.coeffs)  # (nc, 4, nloc)
        nc, nloc = self.cell_dofs.shape
        rows = np.broadcast_to(4 * np.arange(nc)[:, None, None] + np.arange(4)[None, :, None],
                               (nc, 4, nloc))
        cols = np.broadcast_to(self.cell_dofs[:, None, :], (nc, 4, nloc))
        keep = (cols >= 0) & (local != 0)
        return sp.coo_matrix((local[keep], (rows[keep], cols[keep])),
                             shape=(4 * nc, self.n_dofs)).tocsr()

    def evaluate(self, u, x, y) -> np.ndarray:
        """Point values of the discrete function (points on shared edges take the first cell)."""
        x = np.atleast_1d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        k, s, t = locate(self.grid, x, y)
        C = self.cell_coefficients(u)
        vals = np.full(x.shape, np.nan)
        ok = k >= 0
        vals[ok] = np.einsum("pa,pa->p", monomials(s[ok], t[ok]), C[k[ok]])
        return vals

    def gradient(self, u, x, y):
        x = np.atleast_1d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        k, s, t = locate(self.grid, x, y)
        C = self.cell_coefficients(u)
        x0, y0, hx, hy = self.cell_geometry
        gx = np.full(x.shape, np.nan)
        gy = np.full(x.shape, np.nan)
        ok = k >= 0
        ds, dt = monomials_grad(s[ok], t[ok])
        gx[ok] = np.einsum("pa,pa->p", ds, C[k[ok]]) * 2 / hx[k[ok]]
        gy[ok] = np.einsum("pa,pa->p", dt, C[k[ok]]) * 2 / hy[k[ok]]
        return gx, gy


def locate(grid: RectGrid, x, y):
    """Active cell index and reference coordinates of points (-1 if outside)."""
    i = np.clip(np.searchsorted(grid.xs, x, side="right") - 1, 0, grid.m - 1)
    j = np.clip(np.searchsorted(grid.ys, y, side="right") - 1, 0, grid.n - 1)
    inside = ((x >= grid.xs[0]) & (x <= grid.xs[-1]) & (y >= grid.ys[0]) & (y <= grid.ys[-1]))
    k = np.where(inside, grid.entities.cell_lookup[i, j], -1)
    s = 2 * (x - grid.xs[i]) / grid.widths[i] - 1
    t = 2 * (y - grid.ys[j]) / grid.heights[j] - 1
    return k, s, t


def _vertex_numbering(grid: RectGrid, homogeneous: bool):
    ent = grid.entities
    free = ~ent.vertex_boundary if homogeneous else np.ones(ent.n_vertices, dtype=bool)
    vnum = -np.ones(ent.n_vertices, dtype=int)
    vnum[free] = np.arange(free.sum())
    return vnum, int(free.sum())


def q1_dofmap(grid: RectGrid, homogeneous: bool = True) -> DofMap:
    ent = grid.entities
    vnum, nv = _vertex_numbering(grid, homogeneous)
    coeffs = np.broadcast_to(q1_ref(), (ent.n_cells, 4, N_MONO)).copy()
    return DofMap("q1", grid, vnum[ent.cell_vertices], coeffs, nv, homogeneous)


def wilson_dofmap(grid: RectGrid, homogeneous: bool = True) -> DofMap:
    ent = grid.entities
    vnum, nv = _vertex_numbering(grid, homogeneous)
    nc = ent.n_cells
    bubbles = nv + np.arange(2 * nc).reshape(nc, 2)
    cell_dofs = np.hstack([vnum[ent.cell_vertices], bubbles])
    coeffs = np.broadcast_to(wilson_ref(), (nc, 6, N_MONO)).copy()
    return DofMap("wilson", grid, cell_dofs, coeffs, nv + 2 * nc, homogeneous,
                  info={"n_vertex_dofs": nv, "vertex_numbering": vnum})


def broken_p2_dofmap(grid: RectGrid) -> DofMap:
    """Discontinuous P2 with six Wilson-type DOFs owned by each cell."""
    nc = grid.entities.n_cells
    cell_dofs = np.arange(6 * nc).reshape(nc, 6)
    coeffs = np.broadcast_to(wilson_ref(), (nc, 6, N_MONO)).copy()
    return DofMap("p2-broken", grid, cell_dofs, coeffs, 6 * nc, False)


def rm_dofmap(grid: RectGrid, homogeneous: bool = True) -> DofMap:
    """Rectangular Morley space; homogeneous means vanishing boundary vertex values only."""
    ent = grid.entities
    vnum, nv = _vertex_numbering(grid, homogeneous)
    hx = grid.widths[ent.cell_ij[:, 0]]
    hy = grid.heights[ent.cell_ij[:, 1]]
    cell_dofs = np.hstack([vnum[ent.cell_vertices], nv + ent.cell_edges])
    return DofMap("rm", grid, cell_dofs, rm_coefficients(hx, hy), nv + ent.n_edges,
                  homogeneous, info={"n_vertex_dofs": nv, "vertex_numbering": vnum})


def build_dofmap(kind: str, grid: RectGrid, homogeneous: bool = True) -> DofMap:
    """DOF map of the unconstrained carrier space of ``kind``.

    RRM lives in the Wilson space (plus constraints) and MC in broken P2.
    """
    if kind == "q1":
        return q1_dofmap(grid, homogeneous)
    if kind in ("wilson", "rrm"):
        dm = wilson_dofmap(grid, homogeneous)
        dm.kind = kind
        return dm
    if kind == "rm":
        return rm_dofmap(grid, homogeneous)
    if kind == "mc":
        dm = broken_p2_dofmap(grid)
        dm.kind = "mc"
        dm.homogeneous = homogeneous
        return dm
    raise PreconditionError(f"unknown element {kind!r}; expected one of {KINDS}")


# ---------------------------------------------------------------------------
# constraints

def build_constraints_rrm(grid: RectGrid, wilson: DofMap | None = None) -> sp.csr_matrix:
    """Jumps of the edge-mean normal derivative across every interior edge.

    Row order follows the interior edges of ``grid.entities``; the jump is
    (value in the +x/+y cell) - (value in the other cell).
    """
    wilson = wilson if wilson is not None else wilson_dofmap(grid)
    ent = grid.entities
    D = wilson.edge_derivative_means
    inner = ent.interior_edges
    lo, hi = ent.edge_cells[inner, 0], ent.edge_cells[inner, 1]
    vert = ent.edge_vertical[inner]
    lo_edge = np.where(vert, RIGHT, TOP)
    hi_edge = np.where(vert, LEFT, BOTTOM)
    return (D[4 * hi + hi_edge] - D[4 * lo + lo_edge]).tocsr()


def build_constraints_mc(grid: RectGrid, broken: DofMap | None = None,
                         homogeneous: bool = True) -> sp.csr_matrix:
    """Gauss-point continuity rows (and boundary vanishing rows) on broken P2."""
    broken = broken if broken is not None else broken_p2_dofmap(grid)
    ent = grid.entities
    x0, y0, hx, hy = broken.cell_geometry
    rows, cols, vals = [], [], []
    r = 0
    for e in range(ent.n_edges):
        lo, hi = ent.edge_cells[e]
        if lo >= 0 and hi >= 0:
            sides = ((hi, 1.0), (lo, -1.0))
        elif homogeneous:
            sides = ((max(lo, hi), 1.0),)
        else:
            continue
        pts = ent.edge_points(grid, e, (THETA1, THETA2))
        for p in pts:
            for k, sign in sides:
                s = 2 * (p[0] - x0[k]) / hx[k] - 1
                t = 2 * (p[1] - y0[k]) / hy[k] - 1
                local = broken.coeffs[k] @ monomials(s, t)
                rows += [r] * len(local)
                cols += list(broken.cell_dofs[k])
                vals += list(sign * local)
            r += 1
    return sp.coo_matrix((vals, (rows, cols)), shape=(r, broken.n_dofs)).tocsr()


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    """Rank from a column-pivoted QR with a relative diagonal threshold."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, float)
    if A.size == 0:
        return 0
    R = sla.qr(A, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0:
        return 0
    return int((d > rtol * d[0]).sum())


def membership_rrm(coeffs, grid: RectGrid, B=None) -> bool:
    """Whether a Wilson coefficient vector satisfies every RRM constraint row."""
    B = B if B is not None else build_constraints_rrm(grid)
    u = np.asarray(coeffs, dtype=float)
    if u.shape != (B.shape[1],):
        raise PreconditionError(f"expected {B.shape[1]} Wilson coefficients, got {u.shape}")
    res = np.abs(B @ u)
    scale = abs(B) @ np.abs(u)
    return bool(np.all(res <= MEMBERSHIP_TOL * np.maximum(scale, 1e-300)) or not res.any())


# ---------------------------------------------------------------------------
# explicit bases

@dataclass(eq=False)
class ExplicitBasis:
    """Global basis functions as columns over the DOFs of ``dofmap``."""

    dofmap: DofMap
    vectors: np.ndarray | sp.spmatrix
    kinds: list = field(default_factory=list)
    patches: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.vectors.shape[1]

    @cached_property
    def matrix(self) -> sp.csc_matrix:
        if sp.issparse(self.vectors):
            return sp.csc_matrix(self.vectors)
        Z = np.where(np.abs(self.vectors) > 1e-14, self.vectors, 0.0)
        return sp.csc_matrix(Z)

    def column(self, k: int) -> np.ndarray:
        return self.matrix[:, k].toarray().ravel()

    def rank(self) -> int:
        return numerical_rank(self.matrix.toarray())

    def expand(self, c) -> np.ndarray:
        """Coefficients over the carrier DOFs of a combination ``sum c_k phi_k``."""
        return self.matrix @ np.asarray(c, dtype=float)


def _normalize(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    return v / v[k]


def nullspace(A: np.ndarray, rtol: float = RANK_RTOL) -> np.ndarray:
    """Orthonormal kernel basis, threshold ``rtol * sigma_max``."""
    A = np.asarray(A, float)
    ncol = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(ncol)
    _, sv, vt = sla.svd(A, full_matrices=True)
    tol = rtol * (sv[0] if sv.size else 0.0)
    rank = int((sv > tol).sum())
    return vt[rank:].T


@dataclass(frozen=True)
class Patch:
    kind: str
    i0: int  # 0-based first cell column
    i1: int  # exclusive
    j0: int
    j1: int
    zero_sides: tuple


def rrm_patches(m: int, n: int) -> list[Patch]:
    """Support patches of the RRM basis in sweeping order (0-based cell ranges)."""
    P = []
    for i in range(2, m):  # 1-based i = 2..m-1, patch columns i-1..i+1
        P.append(Patch("bottom", i - 2, i + 1, 0, 2, (LEFT, RIGHT, TOP)))
    for i in range(2, m):
        P.append(Patch("top", i - 2, i + 1, n - 2, n, (LEFT, BOTTOM, RIGHT)))
    for j in range(2, n):
        P.append(Patch("left", 0, 2, j - 2, j + 1, (BOTTOM, RIGHT, TOP)))
    for j in range(2, n):
        P.append(Patch("right", m - 2, m, j - 2, j + 1, (LEFT, BOTTOM, TOP)))
    for i in (m - 1, m):
        P.append(Patch("column", i - 1, i, 0, n, (LEFT, RIGHT)))
    for j in (n - 1, n):
        P.append(Patch("row", 0, m, j - 1, j, (BOTTOM, TOP)))
    for j in range(2, n):
        for i in range(2, m):
            P.append(Patch("interior", i - 2, i + 1, j - 2, j + 1, (LEFT, BOTTOM, RIGHT, TOP)))
    P.append(Patch("corner", m - 2, m, n - 2, n, (LEFT, BOTTOM)))
    return P


def _patch_system(grid: RectGrid, wilson: DofMap, patch: Patch):
    """Equations and unknown DOFs of the functions supported on ``patch``."""
    ent = grid.entities
    vnum = wilson.info["vertex_numbering"]
    nv = wilson.info["n_vertex_dofs"]
    ci, cj = ent.cell_ij[:, 0], ent.cell_ij[:, 1]
    in_patch = (ci >= patch.i0) & (ci < patch.i1) & (cj >= patch.j0) & (cj < patch.j1)
    cells = np.flatnonzero(in_patch)
    vi, vj = ent.vertex_ij[:, 0], ent.vertex_ij[:, 1]
    inner_v = (vi > patch.i0) & (vi < patch.i1) & (vj > patch.j0) & (vj < patch.j1)
    unknowns = np.concatenate([vnum[inner_v & (vnum >= 0)],
                               (nv + 2 * cells[:, None] + np.arange(2)).ravel()])
    edges = np.unique(ent.cell_edges[cells])
    lo, hi = ent.edge_cells[edges].T
    lo_in, hi_in = np.isin(lo, cells), np.isin(hi, cells)
    vert = ent.edge_vertical[edges]
    lo_row = 4 * lo + np.where(vert, RIGHT, TOP)
    hi_row = 4 * hi + np.where(vert, LEFT, BOTTOM)
    both = lo_in & hi_in
    # one-sided edges: the patch side they lie on, seen from inside the patch
    side = np.where(vert, np.where(hi_in, LEFT, RIGHT), np.where(hi_in, BOTTOM, TOP))
    outside = np.where(hi_in, lo, hi)
    one = ~both & ((outside >= 0) | np.isin(side, patch.zero_sides))
    plus = np.concatenate([hi_row[both], np.where(hi_in, hi_row, lo_row)[one]])
    minus = lo_row[both]
    D = wilson.edge_derivative_means[np.concatenate([plus, minus])][:, unknowns].toarray()
    A = D[:len(plus)]
    A[:len(minus)] -= D[len(plus):]
    return A, unknowns


def build_rrm_basis(grid: RectGrid, wilson: DofMap | None = None) -> ExplicitBasis:
    """mn+1 patch functions spanning the homogeneous RRM space of a full grid."""
    if not grid.is_full:
        raise PreconditionError("explicit RRM basis needs a full rectangular grid")
    if grid.m < 2 or grid.n < 2:
        raise PreconditionError("m, n >= 2 required for the RRM basis")
    wilson = wilson if wilson is not None else wilson_dofmap(grid)
    patches = rrm_patches(grid.m, grid.n)
    rows, cols, vals = [], [], []
    for k, patch in enumerate(patches):
        A, unknowns = _patch_system(grid, wilson, patch)
        N = nullspace(A)
        if N.shape[1] != 1:
            raise NumericalError(
                f"{patch.kind} patch {patch} has kernel dimension {N.shape[1]}, expected 1")
        v = _normalize(N[:, 0])
        keep = np.abs(v) > 1e-14
        rows.append(unknowns[keep])
        cols.append(np.full(keep.sum(), k))
        vals.append(v[keep])
    V = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(wilson.n_dofs, len(patches)))
    return ExplicitBasis(wilson, V, [p.kind for p in patches], patches)


def build_mc_basis(grid: RectGrid, homogeneous: bool = True) -> ExplicitBasis:
    """Bilinear vertex functions, cell bubbles and (non-homogeneous) strip functions.

    Vectors live on the broken-P2 DOFs (six per cell: a1..a4, phi_xx/xi^2,
    phi_yy/eta^2).
    """
    if not grid.is_full:
        raise PreconditionError("explicit MC basis needs a full rectangular grid")
    dm = build_dofmap("mc", grid, homogeneous)
    ent = grid.entities
    nc = ent.n_cells
    cols, kinds = [], []

    verts = ent.interior_vertices if homogeneous else np.arange(ent.n_vertices)
    for v in verts:
        vec = np.zeros(dm.n_dofs)
        k, a = np.nonzero(ent.cell_vertices == v)
        vec[6 * k + a] = 1.0
        cols.append(vec)
        kinds.append("vertex")
    first_bubble = 0 if homogeneous else 1
    for k in range(first_bubble, nc):
        vec = np.zeros(dm.n_dofs)
        vec[6 * k:6 * k + 4] = -BUBBLE_SHIFT
        vec[6 * k + 4] = vec[6 * k + 5] = 1.0
        cols.append(_normalize(vec))
        kinds.append("bubble")
    if not homogeneous:
        ci, cj = ent.cell_ij[:, 0], ent.cell_ij[:, 1]
        for i in range(grid.m):
            vec = np.zeros(dm.n_dofs)
            vec[6 * np.flatnonzero(ci == i) + 4] = 1.0
            cols.append(vec)
            kinds.append("column")
        for j in range(grid.n):
            vec = np.zeros(dm.n_dofs)
            vec[6 * np.flatnonzero(cj == j) + 5] = 1.0
            cols.append(vec)
            kinds.append("row")
    return ExplicitBasis(dm, np.array(cols).T, kinds)


# ---------------------------------------------------------------------------
# dimension bookkeeping and the discrete exact sequence

def expected_dims(m: int, n: int) -> dict:
    return {
        "dim_wilson": (m - 1) * (n - 1) + 2 * m * n,
        "n_constraints": 2 * m * n - m - n,
        "dim_rrm": m * n + 1,
        "dim_mc_hom": 2 * m * n - m - n + 1,
        "dim_mc": 2 * m * n + 2 * m + 2 * n,
    }


def verify_exact_sequence(basis: ExplicitBasis, grid: RectGrid | None = None) -> dict:
    """Check that curl_h of every basis function is a divergence-free PS field.

    Violations are relative to the largest gradient magnitude of the function.
    """
    dm = basis.dofmap
    grid = grid if grid is not None else dm.grid
    ent = grid.entities
    x0, y0, hx, hy = dm.cell_geometry
    inner = ent.interior_edges
    bnd = ent.boundary_edges
    gx_pts, gw = np.polynomial.legendre.leggauss(2)
    params = 0.5 * (gx_pts + 1)
    worst = {"piecewise_linear": 0.0, "edge_mean_continuity": 0.0,
             "boundary_normal_mean": 0.0, "divergence": 0.0}

    def curl_means(C, k, e):
        pts = ent.edge_points(grid, e, params)
        s = 2 * (pts[:, 0] - x0[k]) / hx[k] - 1
        t = 2 * (pts[:, 1] - y0[k]) / hy[k] - 1
        ds, dt = monomials_grad(s, t)
        ux = (ds @ C[k]) * 2 / hx[k]
        uy = (dt @ C[k]) * 2 / hy[k]
        return 0.5 * gw @ uy, -0.5 * gw @ ux

    for col in range(len(basis)):
        C = dm.cell_coefficients(basis.column(col))
        if not np.any(C):
            continue
        # gradient scale from the linear and quadratic coefficients
        scale = max(np.abs(C[:, 1:]).max() * 2 / min(hx.min(), hy.min()), 1e-300)
        cubic = np.abs(C[:, 6:]).max() * 2 / min(hx.min(), hy.min())
        # mixed partials of each cell polynomial: d/dx(d/dy) - d/dy(d/dx), both 4 c_st/(hx hy)
        mixed_xy = C[:, 4] * 4 / (hx * hy)
        mixed_yx = C[:, 4] * 4 / (hy * hx)
        div = np.abs(mixed_xy - mixed_yx).max()
        cont = 0.0
        for e in inner:
            lo, hi = ent.edge_cells[e]
            a = np.array(curl_means(C, lo, e))
            b = np.array(curl_means(C, hi, e))
            cont = max(cont, np.abs(a - b).max())
        bnorm = 0.0
        for e in bnd:
            k = max(ent.edge_cells[e])
            c1, c2 = curl_means(C, k, e)
            normal = c1 if ent.edge_vertical[e] else c2
            bnorm = max(bnorm, abs(normal))
        worst["piecewise_linear"] = max(worst["piecewise_linear"], cubic / scale)
        worst["edge_mean_continuity"] = max(worst["edge_mean_continuity"], cont / scale)
        worst["boundary_normal_mean"] = max(worst["boundary_normal_mean"], bnorm / scale)
        worst["divergence"] = max(worst["divergence"], div / scale)
    worst["max_violation"] = max(worst.values())
    worst["n_functions"] = len(basis)
    return worst
