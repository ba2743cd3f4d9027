"""End-to-end drivers: solve a source or eigenvalue problem for any element."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble, reduce
from .exceptions import PreconditionError
from .mesh import RectGrid, build_nonuniform_pattern, build_uniform
from .postproc import ErrorReport, broken_energy, error_norms
from .problems import EXAMPLE1, SourceProblem
from .solve import (EigenResult, eig_saddle, eig_smallest, eig_system,
                    solve_source, solve_source_reduced, solve_source_saddle)
from .spaces import DofMap, KINDS, build_mc_basis, build_rrm_basis

log = logging.getLogger(__name__)

FORMULATIONS = ("saddle", "reduced", "both")
AGREEMENT_TOL = 1e-10


@dataclass
class SourceResult:
    dofmap: DofMap
    u: np.ndarray
    meta: dict = field(default_factory=dict)


def _check_element(element: str, formulation: str) -> None:
    if element not in KINDS:
        raise PreconditionError(f"unknown element {element!r}; expected one of {KINDS}")
    if formulation not in FORMULATIONS:
        raise PreconditionError(f"unknown formulation {formulation!r}; expected one of {FORMULATIONS}")


def _rrm_formulation(grid: RectGrid, formulation: str) -> str:
    if grid.is_full:
        return formulation
    if formulation != "saddle":
        raise PreconditionError("non-rectangular domains support the saddle formulation only")
    return "saddle"


def solve_source_problem(element: str, grid: RectGrid, problem: SourceProblem = EXAMPLE1,
                         formulation: str = "reduced", rho=None) -> SourceResult:
    """Discrete solution of -div grad u = f with homogeneous Dirichlet data."""
    _check_element(element, formulation)
    sys = assemble(element, grid, rho=rho, f=problem.f)
    meta = {"element": element, "n_dofs": sys.n_dofs}
    if element == "rrm":
        form = _rrm_formulation(grid, formulation)
        u_red = u_sad = None
        if form in ("reduced", "both"):
            basis = build_rrm_basis(grid, sys.dofmap)
            red = reduce(sys, basis)
            u_red = red.expand(solve_source_reduced(red))
            meta["dim"] = red.n_dofs
        if form in ("saddle", "both"):
            sol = solve_source_saddle(sys)
            u_sad = sol.u
            meta.update(kkt_residual=sol.residual, constraint_residual=sol.constraint_residual)
            meta.setdefault("dim", sys.n_dofs - sys.B.shape[0])
        if form == "both":
            ref = broken_energy(sys.dofmap, u_red)
            dist = broken_energy(sys.dofmap, u_red - u_sad)
            meta["formulation_distance"] = dist / ref if ref > 0 else dist
        meta["formulation"] = form
        return SourceResult(sys.dofmap, u_red if u_red is not None else u_sad, meta)
    if element == "mc":
        basis = build_mc_basis(grid, homogeneous=True)
        red = reduce(sys, basis)
        meta["dim"] = red.n_dofs
        return SourceResult(sys.dofmap, red.expand(solve_source_reduced(red)), meta)
    meta["dim"] = sys.n_dofs
    return SourceResult(sys.dofmap, solve_source(sys), meta)


def source_grids(mode: str = "uniform", levels=(8, 16, 32, 64), domain="unit-square") -> list[RectGrid]:
    """Uniform levels are cell counts per side; nonuniform takes a level count."""
    if mode == "uniform":
        return [build_uniform(m, m, domain) for m in levels]
    if mode == "nonuniform":
        count = levels if np.isscalar(levels) else len(levels)
        return [build_nonuniform_pattern(k, domain) for k in range(1, int(count) + 1)]
    raise PreconditionError(f"unknown mesh mode {mode!r}")


def run_source(element: str, grids, problem: SourceProblem = EXAMPLE1,
               formulation: str = "reduced", rho=None, jobs: int = 1) -> ErrorReport:
    """Error table over a sequence of grids (coarse to fine)."""

    def one(g):
        res = solve_source_problem(element, g, problem, formulation, rho)
        e, l2 = error_norms(res.dofmap, res.u, problem.u, problem.grad_u, rho)
        return g, e, l2, res.meta

    grids = list(grids)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            out = list(ex.map(one, grids))
    else:
        out = [one(g) for g in grids]
    meta = {"element": element, "problem": problem.name, "levels": [o[3] for o in out]}
    return ErrorReport.from_levels([o[0].h for o in out], [o[0].hx for o in out],
                                   [o[1] for o in out], [o[2] for o in out], meta)


def eigen_grid(hx: float, aspect: float = 2.0, domain="unit-square") -> RectGrid:
    """Uniform grid with cell width ``hx`` and ``hx / hy = aspect``."""
    if hx <= 0 or aspect <= 0:
        raise PreconditionError("hx and aspect must be positive")
    width = 2.0 if domain == "l-shape" else (1.0 if domain == "unit-square" else None)
    if width is None:
        raise PreconditionError("eigen_grid supports the unit square and the L-shape")
    m = width / hx
    n = m * aspect
    if abs(m - round(m)) > 1e-9 or abs(n - round(n)) > 1e-9:
        raise PreconditionError(f"hx={hx} with aspect {aspect} does not tile the domain")
    return build_uniform(int(round(m)), int(round(n)), domain)


def solve_eigen_problem(element: str, grid: RectGrid, k: int = 6, formulation: str = "reduced",
                        rho=None) -> EigenResult:
    """k smallest Dirichlet eigenpairs of the chosen discretization."""
    _check_element(element, formulation)
    sys = assemble(element, grid, rho=rho)
    if element == "rrm":
        form = _rrm_formulation(grid, formulation)
        if form == "saddle":
            return eig_saddle(sys, k)
        res = eig_smallest(reduce(sys, build_rrm_basis(grid, sys.dofmap)), k)
        if form == "both":
            other = eig_saddle(sys, k)
            res.meta["formulation_gap"] = float(np.max(np.abs(res.eigenvalues - other.eigenvalues)))
        return res
    if element == "mc":
        return eig_smallest(reduce(sys, build_mc_basis(grid, True)), k)
    return eig_system(sys, k)
