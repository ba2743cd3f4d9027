import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rrmfem.estimators import EigenSolver, PoissonSolver
from rrmfem.exceptions import PreconditionError
from rrmfem.mesh import build_uniform
from rrmfem.problems import EXAMPLE1


def test_params_roundtrip():
    est = PoissonSolver(element="mc")
    assert est.get_params() == {"element": "mc", "formulation": "reduced", "problem": "example1"}
    other = clone(est).set_params(element="q1")
    assert other.element == "q1" and est.element == "mc"


def test_poisson_fit_predict(rng):
    est = PoissonSolver().fit((16, 16))
    X = rng.uniform(0.05, 0.95, size=(50, 2))
    y = EXAMPLE1.u(X[:, 0], X[:, 1])
    assert np.abs(est.predict(X) - y).max() < 1e-2
    assert est.score(X, y) > 0.999
    assert est.n_dofs_ == 16 * 16 + 1
    energy, l2 = est.error_norms()
    assert energy < 0.02 and l2 < 0.005
    gx, gy = est.gradient(X[:3])
    assert gx.shape == (3,)


def test_not_fitted_and_bad_params():
    with pytest.raises(NotFittedError):
        PoissonSolver().predict([[0.5, 0.5]])
    with pytest.raises(PreconditionError):
        PoissonSolver(element="p5").fit((2, 2))
    with pytest.raises(PreconditionError):
        PoissonSolver().fit("grid")
    with pytest.raises(PreconditionError):
        EigenSolver(n_eigenvalues=0).fit((2, 2))


def test_eigen_solver():
    est = EigenSolver(n_eigenvalues=3).fit(build_uniform(8, 16))
    assert est.eigenvalues_ == pytest.approx([19.428, 48.127, 48.163], abs=0.002)
    vals = est.predict([[0.5, 0.5], [0.25, 0.5]])
    assert vals.shape == (2, 3)
    # first eigenfunction is positive inside with the chosen sign convention
    assert np.all(vals[:, 0] > 0)


def test_eigen_solver_l_shape_uses_saddle():
    est = EigenSolver(n_eigenvalues=3).fit(build_uniform(4, 8, "l-shape"))
    assert est.eigenvalues_[2] == pytest.approx(15.857, abs=0.002)
    assert est.meta_["method"] == "kkt-shift-invert"
