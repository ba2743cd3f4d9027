"""Tensor-product rectangular grids, refinement and entity enumeration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import PreconditionError

# local edge order inside a cell: left, bottom, right, top
LEFT, BOTTOM, RIGHT, TOP = range(4)

PATTERN_FRACTION = 0.35


@dataclass(frozen=True, eq=False)
class RectGrid:
    """Rectangular tensor grid with an optional mask of inactive cells.

    ``active[i, j]`` refers to the cell ``[xs[i], xs[i+1]] x [ys[j], ys[j+1]]``.
    """

    xs: np.ndarray
    ys: np.ndarray
    active: np.ndarray = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or ys.ndim != 1 or len(xs) < 2 or len(ys) < 2:
            raise PreconditionError("need at least two breakpoints per direction")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
            raise PreconditionError("breakpoints must be strictly increasing")
        if self.active is None:
            active = np.ones((len(xs) - 1, len(ys) - 1), dtype=bool)
        else:
            active = np.asarray(self.active, dtype=bool)
            if active.shape != (len(xs) - 1, len(ys) - 1):
                raise PreconditionError(
                    f"active mask shape {active.shape} does not match "
                    f"{len(xs) - 1}x{len(ys) - 1} cells")
            if not active.any():
                raise PreconditionError("grid has no active cells")
        for name, arr in (("xs", xs), ("ys", ys), ("active", active)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return len(self.xs) - 1

    @property
    def n(self) -> int:
        return len(self.ys) - 1

    @property
    def is_full(self) -> bool:
        return bool(self.active.all())

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.xs)

    @property
    def heights(self) -> np.ndarray:
        return np.diff(self.ys)

    @property
    def h(self) -> float:
        """Largest cell dimension over the active cells."""
        ii, jj = np.nonzero(self.active)
        return float(max(self.widths[ii].max(), self.heights[jj].max()))

    @property
    def hx(self) -> float:
        ii, _ = np.nonzero(self.active)
        return float(self.widths[ii].max())

    @property
    def hy(self) -> float:
        _, jj = np.nonzero(self.active)
        return float(self.heights[jj].max())

    @cached_property
    def entities(self) -> "EntityIndex":
        return EntityIndex.from_grid(self)

    def translated(self, dx: float, dy: float) -> "RectGrid":
        return RectGrid(self.xs + dx, self.ys + dy, self.active.copy())

    def to_dict(self) -> dict:
        return {"xs": self.xs.tolist(), "ys": self.ys.tolist(),
                "active": self.active.astype(int).tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "RectGrid":
        active = data.get("active")
        return cls(np.asarray(data["xs"], float), np.asarray(data["ys"], float),
                   None if active is None else np.asarray(active, bool))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path) -> "RectGrid":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __repr__(self):
        kind = "full" if self.is_full else f"{int(self.active.sum())} active"
        return f"RectGrid({self.m}x{self.n}, {kind}, h={self.h:.4g})"


@dataclass(eq=False)
class EntityIndex:
    """Vertex, edge and cell numbering of the active part of a grid.

    Cells list their vertices counterclockwise from the lower-left corner
    (a1..a4) and their edges as left, bottom, right, top.  Every edge
    carries a fixed normal: +x for vertical edges, +y for horizontal ones.
    ``edge_cells[e] = (minus_cell, plus_cell)`` with -1 where no active cell
    exists.
    """

    cell_ij: np.ndarray
    cell_vertices: np.ndarray
    cell_edges: np.ndarray
    vertex_ij: np.ndarray
    vertex_xy: np.ndarray
    vertex_boundary: np.ndarray
    edge_vertical: np.ndarray
    edge_ij: np.ndarray
    edge_vertices: np.ndarray
    edge_cells: np.ndarray
    cell_lookup: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cell_ij)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_ij)

    @property
    def n_edges(self) -> int:
        return len(self.edge_ij)

    @property
    def edge_interior(self) -> np.ndarray:
        return (self.edge_cells >= 0).all(axis=1)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_interior)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.edge_interior)

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.vertex_boundary)

    @classmethod
    def from_grid(cls, g: RectGrid) -> "EntityIndex":
        m, n = g.m, g.n
        act = g.active
        cell_ij = np.argwhere(act)  # lexicographic in (i, j)
        # order cells row by row (j major) so that numbering follows y then x
        order = np.lexsort((cell_ij[:, 0], cell_ij[:, 1]))
        cell_ij = cell_ij[order]
        cell_lookup = -np.ones((m, n), dtype=int)
        cell_lookup[cell_ij[:, 0], cell_ij[:, 1]] = np.arange(len(cell_ij))

        # vertices touched by an active cell
        vused = np.zeros((m + 1, n + 1), dtype=bool)
        for di in (0, 1):
            for dj in (0, 1):
                vused[cell_ij[:, 0] + di, cell_ij[:, 1] + dj] = True
        vertex_ij = np.argwhere(vused)
        vorder = np.lexsort((vertex_ij[:, 0], vertex_ij[:, 1]))
        vertex_ij = vertex_ij[vorder]
        vlookup = -np.ones((m + 1, n + 1), dtype=int)
        vlookup[vertex_ij[:, 0], vertex_ij[:, 1]] = np.arange(len(vertex_ij))

        def cell_at(i, j):
            if 0 <= i < m and 0 <= j < n:
                return cell_lookup[i, j]
            return -1

        edges_vertical, edges_ij, edges_cells, edges_vertices = [], [], [], []
        elookup_v = -np.ones((m + 1, n), dtype=int)
        elookup_h = -np.ones((m, n + 1), dtype=int)
        # vertical edges x = xs[i], y in [ys[j], ys[j+1]]
        for j in range(n):
            for i in range(m + 1):
                lo, hi = cell_at(i - 1, j), cell_at(i, j)
                if lo < 0 and hi < 0:
                    continue
                elookup_v[i, j] = len(edges_ij)
                edges_vertical.append(True)
                edges_ij.append((i, j))
                edges_cells.append((lo, hi))
                edges_vertices.append((vlookup[i, j], vlookup[i, j + 1]))
        # horizontal edges y = ys[j], x in [xs[i], xs[i+1]]
        for j in range(n + 1):
            for i in range(m):
                lo, hi = cell_at(i, j - 1), cell_at(i, j)
                if lo < 0 and hi < 0:
                    continue
                elookup_h[i, j] = len(edges_ij)
                edges_vertical.append(False)
                edges_ij.append((i, j))
                edges_cells.append((lo, hi))
                edges_vertices.append((vlookup[i, j], vlookup[i + 1, j]))

        edge_cells = np.array(edges_cells, dtype=int)
        edge_vertices = np.array(edges_vertices, dtype=int)
        boundary = ~(edge_cells >= 0).all(axis=1)
        vertex_boundary = np.zeros(len(vertex_ij), dtype=bool)
        vertex_boundary[edge_vertices[boundary].ravel()] = True

        ci, cj = cell_ij[:, 0], cell_ij[:, 1]
        cell_vertices = np.stack([vlookup[ci, cj], vlookup[ci + 1, cj],
                                  vlookup[ci + 1, cj + 1], vlookup[ci, cj + 1]], axis=1)
        cell_edges = np.stack([elookup_v[ci, cj], elookup_h[ci, cj],
                               elookup_v[ci + 1, cj], elookup_h[ci, cj + 1]], axis=1)
        vertex_xy = np.stack([g.xs[vertex_ij[:, 0]], g.ys[vertex_ij[:, 1]]], axis=1)
        return cls(cell_ij=cell_ij, cell_vertices=cell_vertices, cell_edges=cell_edges,
                   vertex_ij=vertex_ij, vertex_xy=vertex_xy,
                   vertex_boundary=vertex_boundary,
                   edge_vertical=np.array(edges_vertical, dtype=bool),
                   edge_ij=np.array(edges_ij, dtype=int), edge_vertices=edge_vertices,
                   edge_cells=edge_cells, cell_lookup=cell_lookup)

    def edge_points(self, g: RectGrid, e: int, params) -> np.ndarray:
        """Physical points at parametric coordinates ``params`` along edge ``e``."""
        a, b = self.vertex_xy[self.edge_vertices[e]]
        params = np.asarray(params, dtype=float)[:, None]
        return a + params * (b - a)


def _box(domain) -> tuple[float, float, float, float]:
    if domain in ("unit-square", None):
        return 0.0, 1.0, 0.0, 1.0
    if domain == "l-shape":
        return 0.0, 2.0, 0.0, 2.0
    if isinstance(domain, (tuple, list)) and len(domain) == 2:
        return 0.0, float(domain[0]), 0.0, float(domain[1])
    if isinstance(domain, (tuple, list)) and len(domain) == 4:
        return tuple(float(v) for v in domain)
    raise PreconditionError(f"unknown domain {domain!r}")


def build_uniform(m: int, n: int, domain="unit-square") -> RectGrid:
    """Uniform ``m x n`` grid of the unit square, a ``(w, h)`` box, or the L-shape.

    The L-shape is ``(0,2)^2`` with the upper-right quadrant masked out.
    """
    if int(m) < 1 or int(n) < 1:
        raise PreconditionError("cell counts must be positive")
    m, n = int(m), int(n)
    x0, x1, y0, y1 = _box(domain)
    if x1 <= x0 or y1 <= y0:
        raise PreconditionError("degenerate domain")
    xs = np.linspace(x0, x1, m + 1)
    ys = np.linspace(y0, y1, n + 1)
    active = None
    if domain == "l-shape":
        if m % 2 or n % 2:
            raise PreconditionError("L-shape needs even cell counts")
        active = np.ones((m, n), dtype=bool)
        active[m // 2:, n // 2:] = False
    return RectGrid(xs, ys, active)


def _pattern_breakpoints(lo: float, hi: float, tiles: int) -> np.ndarray:
    pts = [lo]
    width = (hi - lo) / tiles
    for k in range(tiles):
        a = lo + k * width
        pts += [a + PATTERN_FRACTION * width, a + width]
    return np.array(pts)


def build_nonuniform_pattern(levels: int, domain="unit-square", tiles: int = 1) -> RectGrid:
    """Grid tiled by 2x2 macro-patterns with sub-interval fractions 0.35/0.65.

    Level ``l`` uses ``tiles * 2**(l-1)`` patterns per side, so the mesh size
    halves per level while every cell keeps an aspect ratio in
    {0.35/0.65, 1, 0.65/0.35} and neighbours of unequal size persist at all scales.
    """
    if int(levels) < 1 or int(tiles) < 1:
        raise PreconditionError("levels and tiles must be >= 1")
    if domain == "l-shape":
        raise PreconditionError("pattern grids are built on rectangles only")
    x0, x1, y0, y1 = _box(domain)
    count = int(tiles) * 2 ** (int(levels) - 1)
    return RectGrid(_pattern_breakpoints(x0, x1, count), _pattern_breakpoints(y0, y1, count))


def _bisect(pts: np.ndarray) -> np.ndarray:
    out = np.empty(2 * len(pts) - 1)
    out[0::2] = pts
    out[1::2] = 0.5 * (pts[:-1] + pts[1:])
    return out


def refine(g: RectGrid) -> RectGrid:
    """Bisect every breakpoint interval; children inherit the parent's mask."""
    active = np.repeat(np.repeat(g.active, 2, axis=0), 2, axis=1)
    return RectGrid(_bisect(g.xs), _bisect(g.ys), active)


def coarsen_by(g: RectGrid, factor: int) -> RectGrid | None:
    """Grid from every ``factor``-th breakpoint, or None if counts do not divide."""
    if g.m % factor or g.n % factor:
        return None
    act = g.active.reshape(g.m // factor, factor, g.n // factor, factor)
    if not (act.all(axis=(1, 3)) | ~act.any(axis=(1, 3))).all():
        return None
    return RectGrid(g.xs[::factor], g.ys[::factor], act.all(axis=(1, 3)))


def satisfies_rt(g: RectGrid) -> bool:
    """True when ``g`` is the double refinement of the grid of every 4th breakpoint."""
    coarse = coarsen_by(g, 4)
    if coarse is None:
        return False
    twice = refine(refine(coarse))
    return (np.allclose(twice.xs, g.xs, rtol=0, atol=1e-12 * np.ptp(g.xs))
            and np.allclose(twice.ys, g.ys, rtol=0, atol=1e-12 * np.ptp(g.ys))
            and np.array_equal(twice.active, g.active))
