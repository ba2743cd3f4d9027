"""Reduced rectangular Morley and related nonconforming rectangle elements."""

from .assembly import AssembledSystem, ReducedSystem, assemble, dump_matrices, reduce
from .estimators import EigenSolver, PoissonSolver
from .exceptions import NumericalError, PreconditionError
from .mesh import RectGrid, build_nonuniform_pattern, build_uniform, refine, satisfies_rt
from .postproc import ErrorReport, eoc, error_norms, l2_lower_bound_check, lower_bound_report
from .solve import (EigenResult, eig_rm, eig_saddle, eig_smallest, rm_interpolant_diagnostic,
                    solve_source_reduced, solve_source_saddle)
from .spaces import (build_constraints_mc, build_constraints_rrm, build_dofmap, build_mc_basis,
                     build_rrm_basis, membership_rrm, verify_exact_sequence)
from .studies import eigen_grid, run_source, solve_eigen_problem, solve_source_problem

__version__ = "0.1.0"

__all__ = [
    "AssembledSystem", "ReducedSystem", "assemble", "dump_matrices", "reduce",
    "EigenSolver", "PoissonSolver", "NumericalError", "PreconditionError",
    "RectGrid", "build_nonuniform_pattern", "build_uniform", "refine", "satisfies_rt",
    "ErrorReport", "eoc", "error_norms", "l2_lower_bound_check", "lower_bound_report",
    "EigenResult", "eig_rm", "eig_saddle", "eig_smallest", "rm_interpolant_diagnostic",
    "solve_source_reduced", "solve_source_saddle",
    "build_constraints_mc", "build_constraints_rrm", "build_dofmap", "build_mc_basis",
    "build_rrm_basis", "membership_rrm", "verify_exact_sequence",
    "eigen_grid", "run_source", "solve_eigen_problem", "solve_source_problem",
]
