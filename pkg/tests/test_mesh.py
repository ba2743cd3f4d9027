import numpy as np
import pytest
from hypothesis import given, strategies as st

from rrmfem.exceptions import PreconditionError
from rrmfem.mesh import (BOTTOM, LEFT, RIGHT, TOP, RectGrid, build_nonuniform_pattern,
                         build_uniform, coarsen_by, refine, satisfies_rt)


@given(st.integers(1, 7), st.integers(1, 7))
def test_entity_counts(m, n):
    ent = build_uniform(m, n).entities
    assert ent.n_cells == m * n
    assert ent.n_vertices == (m + 1) * (n + 1)
    assert ent.n_edges == (m + 1) * n + m * (n + 1)
    assert len(ent.interior_edges) == 2 * m * n - m - n
    assert len(ent.interior_vertices) == (m - 1) * (n - 1)


def test_cell_vertices_counterclockwise():
    g = build_uniform(3, 2)
    ent = g.entities
    for k in range(ent.n_cells):
        xy = ent.vertex_xy[ent.cell_vertices[k]]
        # a1 lower-left, a2 lower-right, a3 upper-right, a4 upper-left
        assert xy[0, 0] < xy[1, 0] and xy[0, 1] == xy[1, 1]
        assert xy[2, 0] == xy[1, 0] and xy[2, 1] > xy[1, 1]
        assert xy[3, 0] == xy[0, 0] and xy[3, 1] == xy[2, 1]


def test_edge_orientation_and_cells():
    g = build_uniform(3, 3)
    ent = g.entities
    for k in range(ent.n_cells):
        e = ent.cell_edges[k]
        assert ent.edge_cells[e[LEFT], 1] == k and ent.edge_cells[e[RIGHT], 0] == k
        assert ent.edge_cells[e[BOTTOM], 1] == k and ent.edge_cells[e[TOP], 0] == k
        assert ent.edge_vertical[e[LEFT]] and not ent.edge_vertical[e[BOTTOM]]


def test_l_shape_mask():
    g = build_uniform(4, 8, "l-shape")
    assert g.active.sum() == 24
    assert not g.is_full
    assert not g.active[2:, 4:].any()
    ent = g.entities
    # the re-entrant corner (1, 1) is a boundary vertex
    corner = np.flatnonzero(np.all(np.isclose(ent.vertex_xy, [1.0, 1.0]), axis=1))
    assert ent.vertex_boundary[corner].all()
    with pytest.raises(PreconditionError):
        build_uniform(3, 4, "l-shape")


def test_invalid_grids():
    with pytest.raises(PreconditionError):
        build_uniform(0, 3)
    with pytest.raises(PreconditionError):
        RectGrid([0.0, 0.5, 0.5, 1.0], [0.0, 1.0])
    with pytest.raises(PreconditionError):
        RectGrid([0.0, 1.0], [0.0, 1.0], np.zeros((1, 1), bool))
    with pytest.raises(PreconditionError):
        RectGrid([0.0, 1.0], [0.0, 1.0], np.ones((2, 1), bool))
    with pytest.raises(PreconditionError):
        build_uniform(2, 2, "circle")


def test_grid_is_immutable():
    g = build_uniform(2, 2)
    with pytest.raises(ValueError):
        g.xs[0] = 3.0


def test_refine_and_rt():
    g = build_uniform(2, 3)
    f = refine(refine(g))
    assert (f.m, f.n) == (8, 12)
    assert f.h == pytest.approx(g.h / 4)
    assert satisfies_rt(f)
    assert not satisfies_rt(build_uniform(6, 6))
    assert coarsen_by(build_uniform(6, 6), 4) is None


def test_rect_domain_and_translation():
    g = build_uniform(2, 4, (2.0, 1.0))
    assert g.xs[-1] == 2.0 and g.ys[-1] == 1.0
    t = g.translated(0.5, -1.0)
    assert np.allclose(t.xs, g.xs + 0.5) and np.allclose(t.ys, g.ys - 1.0)


@pytest.mark.parametrize("level", [1, 2, 3])
def test_pattern_cells_have_three_aspect_ratios(level):
    g = build_nonuniform_pattern(level)
    assert g.m == g.n == 2 ** level
    ratios = np.unique(np.round(np.divide.outer(g.widths, g.heights), 10))
    assert np.allclose(sorted(ratios), sorted([0.35 / 0.65, 1.0, 0.65 / 0.35]))
    assert g.h == pytest.approx(0.65 / 2 ** (level - 1))


def test_json_roundtrip(tmp_path):
    g = build_uniform(4, 8, "l-shape")
    path = tmp_path / "g.json"
    g.to_json(path)
    h = RectGrid.from_json(path)
    assert np.array_equal(h.xs, g.xs) and np.array_equal(h.active, g.active)
