"""Per-cell polynomial spaces, local bases, quadrature and local matrices.

Every cell polynomial is stored as coefficients over the eight monomials
``1, s, t, s^2, st, t^2, s^3, t^3`` in the cell-centred coordinates
``s = 2(x - xc)/hx``, ``t = 2(y - yc)/hy`` which map the cell onto [-1, 1]^2.
Quadratics use the first six entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial.legendre import leggauss

from .exceptions import PreconditionError
from .mesh import BOTTOM, LEFT, RIGHT, TOP

N_MONO = 8
EXPONENTS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (0, 3))
_EXP = np.array(EXPONENTS)

THETA1 = 0.5 * (1.0 - np.sqrt(1.0 / 3.0))
THETA2 = 0.5 * (1.0 + np.sqrt(1.0 / 3.0))
BUBBLE_SHIFT = THETA1 * THETA2  # = 1/6

COMPAT_RTOL = 1e-10


def monomials(s, t) -> np.ndarray:
    """Monomial values, shape ``s.shape + (8,)``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.stack([np.ones_like(s), s, t, s * s, s * t, t * t, s ** 3, t ** 3], axis=-1)


def monomials_grad(s, t) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of the monomials with respect to ``s`` and ``t``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    z, o = np.zeros_like(s), np.ones_like(s)
    ds = np.stack([z, o, z, 2 * s, t, z, 3 * s * s, z], axis=-1)
    dt = np.stack([z, z, o, z, s, 2 * t, z, 3 * t * t], axis=-1)
    return ds, dt


@dataclass(frozen=True)
class GaussRule:
    """Gauss-Legendre data: the two-point edge abscissae and a tensor cell rule.

    ``points`` and ``weights`` live on the reference square [-1, 1]^2.
    """

    theta1: float
    theta2: float
    points: np.ndarray
    weights: np.ndarray
    line_points: np.ndarray
    line_weights: np.ndarray


@lru_cache(maxsize=None)
def gauss_rule(order: int = 4) -> GaussRule:
    x, w = leggauss(order)
    pts = np.array([(a, b) for a in x for b in x])
    wts = np.array([wa * wb for wa in w for wb in w])
    return GaussRule(THETA1, THETA2, pts, wts, x, w)


@dataclass(frozen=True)
class Cell:
    x0: float
    y0: float
    hx: float
    hy: float

    def __post_init__(self):
        if not (self.hx > 0 and self.hy > 0):
            raise PreconditionError(f"degenerate cell {self.hx} x {self.hy}")

    @property
    def xc(self) -> float:
        return self.x0 + 0.5 * self.hx

    @property
    def yc(self) -> float:
        return self.y0 + 0.5 * self.hy

    @property
    def vertices(self) -> np.ndarray:
        x1, y1 = self.x0 + self.hx, self.y0 + self.hy
        return np.array([(self.x0, self.y0), (x1, self.y0), (x1, y1), (self.x0, y1)])

    def to_ref(self, x, y):
        return (2.0 * (np.asarray(x, float) - self.xc) / self.hx,
                2.0 * (np.asarray(y, float) - self.yc) / self.hy)

    def from_ref(self, s, t):
        return (self.xc + 0.5 * self.hx * np.asarray(s, float),
                self.yc + 0.5 * self.hy * np.asarray(t, float))


def as_cell(cell) -> Cell:
    if isinstance(cell, Cell):
        return cell
    if len(cell) == 2:
        return Cell(0.0, 0.0, float(cell[0]), float(cell[1]))
    return Cell(*map(float, cell))


@dataclass(frozen=True)
class LocalQuad:
    """Polynomial on one cell (quadratic, or cubic-enriched for the RM element)."""

    coef: np.ndarray
    cell: Cell

    def __post_init__(self):
        c = np.zeros(N_MONO)
        coef = np.asarray(self.coef, dtype=float)
        c[:len(coef)] = coef
        object.__setattr__(self, "coef", c)

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(np.abs(self.coef) > 0)
        return int(_EXP[nz].sum(axis=1).max()) if len(nz) else 0

    def __call__(self, x, y):
        return monomials(*self.cell.to_ref(x, y)) @ self.coef

    def grad(self, x, y):
        ds, dt = monomials_grad(*self.cell.to_ref(x, y))
        return (ds @ self.coef) * (2.0 / self.cell.hx), (dt @ self.coef) * (2.0 / self.cell.hy)

    def second_derivatives(self):
        """(d_xx, d_yy) of the quadratic part, constant over the cell."""
        c = self.coef
        return 2 * c[3] * (2 / self.cell.hx) ** 2, 2 * c[5] * (2 / self.cell.hy) ** 2

    def __add__(self, other):
        if isinstance(other, LocalQuad):
            return LocalQuad(self.coef + other.coef, self.cell)
        c = self.coef.copy()
        c[0] += other
        return LocalQuad(c, self.cell)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, k):
        return LocalQuad(float(k) * self.coef, self.cell)

    __rmul__ = __mul__

    def __neg__(self):
        return LocalQuad(-self.coef, self.cell)

    @classmethod
    def from_corner_poly(cls, terms: dict, cell) -> "LocalQuad":
        """Build from ``{(a, b): c}`` meaning ``sum c (x-x0)^a (y-y0)^b``.

        Uses ``x - x0 = hx (1 + s) / 2``.
        """
        cell = as_cell(cell)
        coef = np.zeros(N_MONO)
        index = {e: k for k, e in enumerate(EXPONENTS)}
        for (a, b), c in terms.items():
            # (hx/2)^a (1+s)^a (hy/2)^b (1+t)^b
            for p in range(a + 1):
                for q in range(b + 1):
                    if (p, q) not in index:
                        raise ValueError(f"monomial x^{a} y^{b} outside the local space")
                    coef[index[(p, q)]] += (c * comb(a, p) * comb(b, q)
                                            * (cell.hx / 2) ** a * (cell.hy / 2) ** b)
        return cls(coef, cell)


def wilson_basis(cell) -> list[LocalQuad]:
    """The six Wilson shape functions phi_a1..phi_a4, phi_xx, phi_yy of a cell."""
    cell = as_cell(cell)
    xi, eta = cell.hx, cell.hy
    k = 1.0 / (xi * eta)
    forms = [
        {(0, 0): 1.0, (1, 0): -1.0 / xi, (0, 1): -1.0 / eta, (1, 1): k},
        {(1, 0): 1.0 / xi, (1, 1): -k},
        {(1, 1): k},
        {(0, 1): 1.0 / eta, (1, 1): -k},
        {(1, 0): xi, (2, 0): -1.0},
        {(0, 1): eta, (0, 2): -1.0},
    ]
    return [LocalQuad.from_corner_poly(f, cell) for f in forms]


def bubble_phi0(cell) -> LocalQuad:
    """P2 function vanishing at the eight boundary Gauss points of the cell.

    ``phi_xx / xi^2 + phi_yy / eta^2 - theta1 * theta2``.
    """
    cell = as_cell(cell)
    w = wilson_basis(cell)
    return w[4] * (1.0 / cell.hx ** 2) + w[5] * (1.0 / cell.hy ** 2) - BUBBLE_SHIFT


def boundary_gauss_points(cell) -> np.ndarray:
    """Points g11, g12, g21, g22, g31, g32, g41, g42 (counterclockwise)."""
    c = as_cell(cell)
    x0, y0, xi, eta = c.x0, c.y0, c.hx, c.hy
    t1, t2 = THETA1, THETA2
    return np.array([
        (x0 + t1 * xi, y0), (x0 + t2 * xi, y0),
        (x0 + xi, y0 + t1 * eta), (x0 + xi, y0 + t2 * eta),
        (x0 + t2 * xi, y0 + eta), (x0 + t1 * xi, y0 + eta),
        (x0, y0 + t2 * eta), (x0, y0 + t1 * eta),
    ])


def _within(residuals, scale) -> bool:
    return bool(np.all(np.abs(residuals) <= COMPAT_RTOL * max(scale, 1.0)))


def check_compat_mc(gvals, cell=None) -> bool:
    """Can the eight boundary Gauss-point values be matched by some P2 function?

    ``cell`` is accepted for symmetry with the other checks; the conditions do
    not depend on the cell dimensions.
    """
    g11, g12, g21, g22, g31, g32, g41, g42 = np.asarray(gvals, dtype=float)
    t1, t2 = THETA1, THETA2
    res = (
        g11 - g12 + g21 - g22 + g31 - g32 + g41 - g42,
        t1 * (g11 - g32) + t2 * (g31 - g12) + (g21 - g22),
        t1 * (g11 - g12) + (t2 - t1) * (g22 - g41) + t2 * (g32 - g31),
    )
    return _within(res, np.abs(gvals).max(initial=0.0))


def check_compat_rrm(alphas, betas, L: float, H: float) -> bool:
    """Compatibility of vertex values and edge derivative means on an L x H cell.

    ``betas`` are the means of d/dx on the left edge, d/dy on the bottom,
    d/dx on the right and d/dy on the top.
    """
    a1, a2, a3, a4 = np.asarray(alphas, dtype=float)
    b1, b2, b3, b4 = np.asarray(betas, dtype=float)
    res = ((a3 - a4) / L + (a2 - a1) / L - (b1 + b3),
           (a3 - a2) / H + (a4 - a1) / H - (b2 + b4))
    scale = max(np.abs(alphas).max() / min(L, H), np.abs(betas).max(initial=0.0))
    return _within(res, scale)


# Reference-edge geometry: (fixed coordinate name, fixed value, outward sign)
_EDGE_REF = {LEFT: ("s", -1.0, -1.0), BOTTOM: ("t", -1.0, -1.0),
             RIGHT: ("s", 1.0, 1.0), TOP: ("t", 1.0, 1.0)}


@lru_cache(maxsize=None)
def edge_derivative_means_ref() -> np.ndarray:
    """Row ``l``: monomial means of d/ds (left/right) or d/dt (bottom/top) on edge ``l``.

    Two-point Gauss is exact since the derivatives are at most quadratic.
    """
    x, w = leggauss(2)
    out = np.zeros((4, N_MONO))
    for edge, (fixed, val, _) in _EDGE_REF.items():
        if fixed == "s":
            ds, _ = monomials_grad(np.full_like(x, val), x)
            out[edge] = 0.5 * (w @ ds)
        else:
            _, dt = monomials_grad(x, np.full_like(x, val))
            out[edge] = 0.5 * (w @ dt)
    return out


def edge_mean_normal_derivative(p: LocalQuad, edge: int, normal: str = "outward") -> float:
    """Mean of the normal derivative of ``p`` along one of its cell's edges.

    ``normal="global"`` uses +x on vertical and +y on horizontal edges instead
    of the outward normal.
    """
    fixed, _, sign = _EDGE_REF[edge]
    scale = 2.0 / (p.cell.hx if fixed == "s" else p.cell.hy)
    val = scale * (edge_derivative_means_ref()[edge] @ p.coef)
    return float(sign * val if normal == "outward" else val)


# ---------------------------------------------------------------------------
# reference coefficient matrices of the local bases used in global spaces

@lru_cache(maxsize=None)
def q1_ref() -> np.ndarray:
    """Bilinear vertex functions, rows a1..a4."""
    return np.array([
        [1, -1, -1, 0, 1, 0, 0, 0],
        [1, 1, -1, 0, -1, 0, 0, 0],
        [1, 1, 1, 0, 1, 0, 0, 0],
        [1, -1, 1, 0, -1, 0, 0, 0],
    ], dtype=float) / 4.0


@lru_cache(maxsize=None)
def wilson_ref() -> np.ndarray:
    """Wilson functions with bubbles normalised as phi_xx/xi^2 and phi_yy/eta^2.

    In reference coordinates this table is the same for every cell.
    """
    out = np.zeros((6, N_MONO))
    out[:4] = q1_ref()
    out[4, [0, 3]] = 0.25, -0.25
    out[5, [0, 5]] = 0.25, -0.25
    return out


@lru_cache(maxsize=None)
def _rm_dof_matrix_ref() -> np.ndarray:
    """Functionals (4 vertex values, 4 edge derivative means in s/t) on monomials."""
    verts = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
    D = np.zeros((8, N_MONO))
    D[:4] = monomials(verts[:, 0], verts[:, 1])
    D[4:] = edge_derivative_means_ref()
    return D


def rm_coefficients(hx, hy) -> np.ndarray:
    """RM nodal basis for cells of size ``hx x hy``, shape ``(ncell, 8, 8)``.

    DOFs: values at a1..a4, then means of d/dx on left, d/dy on bottom,
    d/dx on right, d/dy on top (fixed +x/+y orientation, not outward).
    """
    hx = np.atleast_1d(np.asarray(hx, float))
    hy = np.atleast_1d(np.asarray(hy, float))
    Cref = np.linalg.inv(_rm_dof_matrix_ref()).T  # row j: coefficients of basis j
    scale = np.ones((len(hx), 8))
    scale[:, 4] = scale[:, 6] = hx / 2
    scale[:, 5] = scale[:, 7] = hy / 2
    return scale[:, :, None] * Cref[None]


def rm_basis(cell) -> list[LocalQuad]:
    cell = as_cell(cell)
    C = rm_coefficients(cell.hx, cell.hy)[0]
    return [LocalQuad(c, cell) for c in C]


def rm_dof_matrix(cell) -> np.ndarray:
    """8x8 matrix of RM functionals applied to the monomials of ``cell``."""
    cell = as_cell(cell)
    D = _rm_dof_matrix_ref().copy()
    D[[4, 6]] *= 2.0 / cell.hx
    D[[5, 7]] *= 2.0 / cell.hy
    return D


# ---------------------------------------------------------------------------
# cell integrals

@lru_cache(maxsize=None)
def _ref_tables(order: int = 4):
    rule = gauss_rule(order)
    s, t = rule.points[:, 0], rule.points[:, 1]
    V = monomials(s, t)
    Vs, Vt = monomials_grad(s, t)
    W = rule.weights
    Ass = Vs.T @ (W[:, None] * Vs)
    Att = Vt.T @ (W[:, None] * Vt)
    return V, Vs, Vt, W, Ass, Att


def quadrature_nodes(x0, y0, hx, hy, order: int = 4):
    """Physical quadrature nodes ``(ncell, nq)`` and weights for many cells."""
    rule = gauss_rule(order)
    x0, y0, hx, hy = (np.atleast_1d(np.asarray(v, float)) for v in (x0, y0, hx, hy))
    X = x0[:, None] + 0.5 * hx[:, None] * (1 + rule.points[None, :, 0])
    Y = y0[:, None] + 0.5 * hy[:, None] * (1 + rule.points[None, :, 1])
    wts = 0.25 * (hx * hy)[:, None] * rule.weights[None, :]
    return X, Y, wts


def monomial_stiffness(hx, hy) -> np.ndarray:
    """Exact int grad m_a . grad m_b over each cell, shape ``(ncell, 8, 8)``."""
    _, _, _, _, Ass, Att = _ref_tables()
    hx = np.atleast_1d(np.asarray(hx, float))[:, None, None]
    hy = np.atleast_1d(np.asarray(hy, float))[:, None, None]
    return (hy / hx) * Ass[None] + (hx / hy) * Att[None]


def _eval_field(func, X, Y):
    if func is None:
        return np.ones_like(X)
    if np.isscalar(func):
        return np.full_like(X, float(func))
    return np.broadcast_to(np.asarray(func(X, Y), dtype=float), X.shape)


def monomial_mass(x0, y0, hx, hy, rho=None) -> np.ndarray:
    V = _ref_tables()[0]
    X, Y, wts = quadrature_nodes(x0, y0, hx, hy)
    w = wts * _eval_field(rho, X, Y)
    return np.einsum("qa,cq,qb->cab", V, w, V)


def monomial_load(x0, y0, hx, hy, f, rho=None) -> np.ndarray:
    V = _ref_tables()[0]
    X, Y, wts = quadrature_nodes(x0, y0, hx, hy)
    w = wts * _eval_field(rho, X, Y) * _eval_field(f, X, Y)
    return np.einsum("qa,cq->ca", V, w)


def check_density(rho, X, Y) -> None:
    vals = _eval_field(rho, X, Y)
    if np.any(vals <= 0):
        raise PreconditionError("density must be positive at every quadrature node")


def local_matrices(basis, cell=None, rho=None, f=None):
    """Stiffness, mass and load of a list of LocalQuads living on one cell."""
    basis = list(basis)
    cell = as_cell(cell) if cell is not None else basis[0].cell
    C = np.array([p.coef for p in basis])
    x0, y0, hx, hy = cell.x0, cell.y0, cell.hx, cell.hy
    X, Y, _ = quadrature_nodes(x0, y0, hx, hy)
    check_density(rho, X, Y)
    G = monomial_stiffness(hx, hy)[0]
    Mm = monomial_mass(x0, y0, hx, hy, rho)[0]
    stiffness = C @ G @ C.T
    mass = C @ Mm @ C.T
    load = C @ monomial_load(x0, y0, hx, hy, f if f is not None else 0.0, rho)[0]
    return stiffness, mass, load
