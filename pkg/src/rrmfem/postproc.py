"""Error norms, convergence orders and eigenvalue lower-bound reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .local import _eval_field, _ref_tables, quadrature_nodes
from .spaces import DofMap

L2_RATIO_FLOOR = 0.2


def error_norms(dofmap: DofMap, u_h, u, grad_u, rho=None) -> tuple[float, float]:
    """Broken H1-seminorm and L2(rho) errors by cellwise 4x4 Gauss quadrature.

    ``u`` and ``grad_u`` are callables on arrays; ``grad_u`` returns (ux, uy).
    """
    V, Vs, Vt, _, _, _ = _ref_tables()
    x0, y0, hx, hy = dofmap.cell_geometry
    X, Y, wts = quadrature_nodes(x0, y0, hx, hy)
    C = dofmap.cell_coefficients(u_h)
    vh = C @ V.T
    gx = (C @ Vs.T) * (2 / hx)[:, None]
    gy = (C @ Vt.T) * (2 / hy)[:, None]
    ux, uy = grad_u(X, Y)
    energy = np.sum(wts * ((ux - gx) ** 2 + (uy - gy) ** 2))
    l2 = np.sum(wts * _eval_field(rho, X, Y) * (u(X, Y) - vh) ** 2)
    return math.sqrt(max(energy, 0.0)), math.sqrt(max(l2, 0.0))


def broken_energy(dofmap: DofMap, v) -> float:
    """|v|_{1,h} of a discrete function."""
    _, Vs, Vt, _, _, _ = _ref_tables()
    x0, y0, hx, hy = dofmap.cell_geometry
    _, _, wts = quadrature_nodes(x0, y0, hx, hy)
    C = dofmap.cell_coefficients(v)
    gx = (C @ Vs.T) * (2 / hx)[:, None]
    gy = (C @ Vt.T) * (2 / hy)[:, None]
    return math.sqrt(float(np.sum(wts * (gx ** 2 + gy ** 2))))


def eoc(errors, hs) -> list[float | None]:
    """Orders between consecutive levels; first entry is None."""
    out: list[float | None] = [None]
    for k in range(1, len(errors)):
        e0, e1, h0, h1 = errors[k - 1], errors[k], hs[k - 1], hs[k]
        if e0 > 0 and e1 > 0 and h0 != h1:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            out.append(None)
    return out


@dataclass
class LevelError:
    level: int
    h: float
    hx: float
    energy_err: float
    l2_err: float
    eoc_energy: float | None = None
    eoc_l2: float | None = None


@dataclass
class ErrorReport:
    rows: list[LevelError] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    COLUMNS = ("level", "h", "hx", "energy_err", "l2_err", "eoc_energy", "eoc_l2")

    @classmethod
    def from_levels(cls, hs, hxs, energy, l2, meta=None) -> "ErrorReport":
        ee = eoc(energy, hs)
        el = eoc(l2, hs)
        rows = [LevelError(k + 1, hs[k], hxs[k], energy[k], l2[k], ee[k], el[k])
                for k in range(len(hs))]
        return cls(rows, dict(meta or {}))

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow(["" if getattr(r, c) is None else _fmt(getattr(r, c)) for c in self.COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rows": [asdict(r) for r in self.rows], "meta": self.meta},
                          indent=2, sort_keys=True)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def l2_lower_bound_check(report: ErrorReport, f_norm: float | None = None,
                         window: int = 3) -> dict:
    """Ratios e_L2/h^2 and whether their last ``window`` values stay comparable."""
    if f_norm is not None and f_norm == 0:
        return {"skipped": True, "reason": "zero source", "passed": None}
    ratios = [r.l2_err / r.h ** 2 for r in report.rows]
    tail = ratios[-window:]
    spread = min(tail) / max(tail) if tail and max(tail) > 0 else 0.0
    return {"skipped": False, "ratios": ratios, "min_max_ratio": spread,
            "passed": bool(len(tail) == window and spread > L2_RATIO_FLOOR)}


def lower_bound_report(lams, exact, hs, rtol: float = 1e-12) -> dict:
    """Per-eigenvalue below-exact and monotonicity flags, gap orders and scaled gaps.

    ``lams`` is a (levels, k) array ordered coarse to fine.
    """
    lams = np.atleast_2d(np.asarray(lams, float))
    exact = np.asarray(exact, float)
    hs = np.asarray(hs, float)
    if lams.shape[0] < 2:
        raise ValueError("at least two levels are required")
    gaps = exact[None, :] - lams
    tol = rtol * np.abs(exact)
    out = []
    for j in range(lams.shape[1]):
        g = gaps[:, j]
        degenerate = bool(np.all(np.abs(g) <= tol[j]))
        out.append({
            "j": j + 1,
            "exact": float(exact[j]),
            "values": lams[:, j].tolist(),
            "below_exact": bool(np.all(g > -tol[j])),
            "monotone": bool(np.all(np.diff(lams[:, j]) >= -tol[j])),
            "degenerate_exact": degenerate,
            "eoc": eoc(np.abs(g).tolist(), hs.tolist()),
            "scaled_gap": (g / hs ** 2).tolist(),
        })
    return {"eigenvalues": out}


def eigen_table_csv(hs, hxs, lams, exact=None) -> str:
    """Rows ``level,h,hx,lambda1..k,order1..k``; orders are gap EOCs against ``exact``.

    Entries of ``exact`` may be None (or NaN) where no exact value is known.
    """
    lams = np.atleast_2d(np.asarray(lams, float))
    nlev, k = lams.shape
    orders = [[None] * nlev for _ in range(k)]
    if exact is not None:
        for j, lam in enumerate(exact[:k]):
            if lam is not None and np.isfinite(lam):
                orders[j] = eoc(np.abs(lam - lams[:, j]).tolist(), list(hs))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["level", "h", "hx"] + [f"lambda{j + 1}" for j in range(k)]
               + [f"order{j + 1}" for j in range(k)])
    for lev in range(nlev):
        w.writerow([lev + 1, _fmt(hs[lev]), _fmt(hxs[lev])]
                   + [f"{v:.6f}" for v in lams[lev]]
                   + ["" if orders[j][lev] is None else f"{orders[j][lev]:.4f}" for j in range(k)])
    return buf.getvalue()


def subspace_angle(U, V, M) -> float:
    """Largest principal angle between the column spans of U and V in the M inner product."""
    U = np.atleast_2d(np.asarray(U, float).T).T
    V = np.atleast_2d(np.asarray(V, float).T).T

    def orth(A):
        G = A.T @ (M @ A)
        L = np.linalg.cholesky(G)
        return np.linalg.solve(L, A.T).T

    Qu, Qv = orth(U), orth(V)
    s = np.linalg.svd(Qu.T @ (M @ Qv), compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))
