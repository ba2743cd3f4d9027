"""scikit-learn style front ends: fit on a grid, predict at points."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import PreconditionError
from .mesh import RectGrid, build_uniform
from .postproc import error_norms
from .problems import get_problem
from .spaces import KINDS, build_dofmap
from .studies import FORMULATIONS, solve_eigen_problem, solve_source_problem


def check_grid(grid) -> RectGrid:
    """Accept a RectGrid, an ``(m, n)`` pair for the unit square, or a grid dict."""
    if isinstance(grid, RectGrid):
        return grid
    if isinstance(grid, dict):
        return RectGrid.from_dict(grid)
    if isinstance(grid, (tuple, list)) and len(grid) == 2:
        return build_uniform(int(grid[0]), int(grid[1]))
    raise PreconditionError(f"cannot interpret {type(grid).__name__} as a grid")


def check_points(X) -> np.ndarray:
    return check_array(X, dtype=float, ensure_min_features=2).reshape(-1, 2)


def _check_common(element, formulation):
    if element not in KINDS:
        raise PreconditionError(f"element must be one of {KINDS}, got {element!r}")
    if formulation not in FORMULATIONS:
        raise PreconditionError(f"formulation must be one of {FORMULATIONS}, got {formulation!r}")


class PoissonSolver(BaseEstimator):
    """Dirichlet Poisson solve; ``predict`` evaluates the discrete solution.

    Parameters
    ----------
    element : {"rrm", "mc", "q1", "wilson", "rm"}
    formulation : {"reduced", "saddle", "both"}
        Only used by RRM; non-rectangular domains need "saddle".
    problem : str
        Name of a built-in manufactured problem.
    """

    def __init__(self, element="rrm", formulation="reduced", problem="example1"):
        self.element = element
        self.formulation = formulation
        self.problem = problem

    def fit(self, grid, y=None):
        _check_common(self.element, self.formulation)
        prob = get_problem(self.problem)
        grid = check_grid(grid)
        res = solve_source_problem(self.element, grid, prob, self.formulation)
        self.grid_ = grid
        self.dofmap_ = res.dofmap
        self.coef_ = res.u
        self.n_dofs_ = int(res.meta["dim"])
        self.meta_ = res.meta
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = check_points(X)
        return self.dofmap_.evaluate(self.coef_, X[:, 0], X[:, 1])

    def gradient(self, X):
        check_is_fitted(self, "coef_")
        X = check_points(X)
        return self.dofmap_.gradient(self.coef_, X[:, 0], X[:, 1])

    def score(self, X, y) -> float:
        """Coefficient of determination of point predictions against ``y``."""
        return float(r2_score(np.ravel(y), self.predict(X)))

    def error_norms(self) -> tuple[float, float]:
        """Broken energy and L2 errors against the exact solution of ``problem``."""
        check_is_fitted(self, "coef_")
        prob = get_problem(self.problem)
        return error_norms(self.dofmap_, self.coef_, prob.u, prob.grad_u)


class EigenSolver(BaseEstimator):
    """Smallest Dirichlet eigenpairs; ``predict`` evaluates the eigenfunctions."""

    def __init__(self, element="rrm", n_eigenvalues=6, formulation="reduced"):
        self.element = element
        self.n_eigenvalues = n_eigenvalues
        self.formulation = formulation

    def fit(self, grid, y=None):
        _check_common(self.element, self.formulation)
        if int(self.n_eigenvalues) < 1:
            raise PreconditionError("n_eigenvalues must be positive")
        grid = check_grid(grid)
        formulation = self.formulation
        if self.element == "rrm" and not grid.is_full:
            formulation = "saddle"
        res = solve_eigen_problem(self.element, grid, int(self.n_eigenvalues), formulation)
        self.grid_ = grid
        self.dofmap_ = build_dofmap(self.element, grid, True)
        self.eigenvalues_ = res.eigenvalues
        self.eigenvectors_ = res.full_vectors
        self.meta_ = res.meta
        return self

    def predict(self, X) -> np.ndarray:
        """Eigenfunction values, shape ``(n_points, n_eigenvalues)``."""
        check_is_fitted(self, "eigenvalues_")
        X = check_points(X)
        return np.column_stack([self.dofmap_.evaluate(v, X[:, 0], X[:, 1])
                                for v in self.eigenvectors_.T])
