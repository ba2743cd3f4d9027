"""Global stiffness, mass and load assembly and basis reduction."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import PreconditionError
from .local import check_density, monomial_load, monomial_mass, monomial_stiffness, quadrature_nodes
from .mesh import RectGrid
from .spaces import (DofMap, ExplicitBasis, build_constraints_rrm, build_dofmap)

DENSE_LIMIT = 5000


@dataclass(eq=False)
class AssembledSystem:
    K: sp.csr_matrix
    M: sp.csr_matrix
    F: np.ndarray
    dofmap: DofMap
    B: sp.csr_matrix | None = None

    @property
    def kind(self) -> str:
        return self.dofmap.kind

    @property
    def grid(self) -> RectGrid:
        return self.dofmap.grid

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]


@dataclass(eq=False)
class ReducedSystem:
    """Galerkin projection of an assembled system onto an explicit basis."""

    K: np.ndarray | sp.csr_matrix
    M: np.ndarray | sp.csr_matrix
    F: np.ndarray
    basis: ExplicitBasis
    parent: AssembledSystem

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]

    def expand(self, c) -> np.ndarray:
        return self.basis.expand(c)


def _scatter(cell_dofs: np.ndarray, local: np.ndarray, n: int) -> sp.csr_matrix:
    nc, nloc = cell_dofs.shape
    rows = np.broadcast_to(cell_dofs[:, :, None], (nc, nloc, nloc))
    cols = np.broadcast_to(cell_dofs[:, None, :], (nc, nloc, nloc))
    keep = (rows >= 0) & (cols >= 0)
    # duplicate (row, col) pairs are summed on conversion
    return sp.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()


def assemble(space, grid: RectGrid | None = None, rho=None, f=None,
             homogeneous: bool = True) -> AssembledSystem:
    """Assemble K, M and F for ``space`` (a DofMap or an element name).

    ``rho`` and ``f`` are callables ``(x, y) -> array``, scalars or None
    (density 1, source 0).  RRM systems carry the jump constraint matrix B.
    """
    dm = space if isinstance(space, DofMap) else build_dofmap(space, grid, homogeneous)
    x0, y0, hx, hy = dm.cell_geometry
    X, Y, _ = quadrature_nodes(x0, y0, hx, hy)
    check_density(rho, X, Y)
    C = dm.coeffs
    Kloc = np.einsum("kir,krs,kjs->kij", C, monomial_stiffness(hx, hy), C)
    Mloc = np.einsum("kir,krs,kjs->kij", C, monomial_mass(x0, y0, hx, hy, rho), C)
    Floc = np.einsum("kir,kr->ki", C, monomial_load(x0, y0, hx, hy, 0.0 if f is None else f, rho))
    K = _scatter(dm.cell_dofs, Kloc, dm.n_dofs)
    M = _scatter(dm.cell_dofs, Mloc, dm.n_dofs)
    keep = dm.cell_dofs >= 0
    F = np.bincount(dm.cell_dofs[keep], weights=Floc[keep], minlength=dm.n_dofs)
    B = build_constraints_rrm(dm.grid, dm) if dm.kind == "rrm" else None
    return AssembledSystem(K, M, F, dm, B)


def reduce(sys: AssembledSystem, basis: ExplicitBasis, dense: bool | None = None) -> ReducedSystem:
    """Triple products Z^T K Z, Z^T M Z and Z^T F with Z the basis columns."""
    Z = basis.matrix
    if Z.shape[0] != sys.n_dofs:
        raise PreconditionError(
            f"basis has {Z.shape[0]} rows but the system has {sys.n_dofs} DOFs")
    dense = Z.shape[1] <= DENSE_LIMIT if dense is None else dense
    Kr = (Z.T @ sys.K @ Z)
    Mr = (Z.T @ sys.M @ Z)
    if dense:
        Kr, Mr = Kr.toarray(), Mr.toarray()
        Kr = 0.5 * (Kr + Kr.T)
        Mr = 0.5 * (Mr + Mr.T)
    else:
        Kr, Mr = Kr.tocsr(), Mr.tocsr()
    return ReducedSystem(Kr, Mr, Z.T @ sys.F, basis, sys)


def dump_matrices(sys: AssembledSystem, directory) -> list[Path]:
    """Write K, M (and B) as 1-based ``row col value`` text files plus F."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    mats = {"K": sys.K, "M": sys.M}
    if sys.B is not None:
        mats["B"] = sys.B
    for name, A in mats.items():
        A = A.tocoo()
        path = directory / f"{name}.coo"
        with path.open("w") as fh:
            fh.write(f"% {A.shape[0]} {A.shape[1]} {A.nnz}\n")
            for r, c, v in zip(A.row, A.col, A.data):
                fh.write(f"{r + 1} {c + 1} {v:.17g}\n")
        written.append(path)
    path = directory / "F.txt"
    np.savetxt(path, sys.F, fmt="%.17g")
    written.append(path)
    return written
