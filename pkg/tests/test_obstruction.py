from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from babbage import expr as E
from babbage import maps as M
from babbage.obstruction import (
    GridWindow,
    fixed_point_sample,
    gradient_vanish_scan,
    label_components,
    local_branch_count,
    mark_cells,
    preimage_components,
    write_marked_csv,
)

import oracles

XY = ["x", "y"]


def mapof(comps, names=XY):
    return M.MapSpec.from_strings(comps, names)


def scalar(text, names=XY):
    return E.parse_expression(text, names)


# grid windows ----------------------------------------------------------------


def test_grid_window_broadcasts_and_validates():
    w = GridWindow([(-1, 1)], (10, 20))
    assert w.bounds == ((-1.0, 1.0), (-1.0, 1.0)) and w.cell_size == (0.2, 0.1)
    assert GridWindow([(0, 1), (0, 2)], (16,)).cells == (16, 16)
    with pytest.raises(ValueError):
        GridWindow([(1, 1)], (10,))
    with pytest.raises(ValueError):
        GridWindow([(0, 1)], (4,))
    with pytest.raises(ValueError):
        GridWindow([(0, 1), (0, 1), (0, 1)], (8, 8))


def test_grid_centers_and_refinement_cap():
    w = GridWindow([(0, 1)], (10,))
    assert np.allclose(w.centers(0), np.arange(10) / 10 + 0.05)
    assert GridWindow([(0, 1)] * 4, (60,)).refined().cells == (80,) * 4
    assert GridWindow([(0, 1)] * 2, (100,)).refined().cells == (200, 200)


def test_marking_rejects_five_axes():
    w = GridWindow([(0, 1)] * 5, (8,))
    with pytest.raises(ValueError, match="unsupported dimension"):
        mark_cells([scalar("x", ["x"])] * 5, [0] * 5, w)


# connected components --------------------------------------------------------


@given(arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_labels_match_flood_fill_2d(mask):
    assert label_components(mask)[1] == oracles.flood_fill_count(mask)


@given(arrays(np.bool_, st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))))
def test_labels_match_flood_fill_4d(mask):
    assert label_components(mask)[1] == oracles.flood_fill_count(mask)


def test_diagonal_neighbours_are_separate_components():
    mask = np.eye(8, dtype=bool)
    assert label_components(mask)[1] == 8


# preimage components ---------------------------------------------------------


def test_cubic_crossing_preimage_has_three_stable_components():
    f = mapof(["x + y*x^2", "0"])
    rep = preimage_components(f, [0, 0], GridWindow([(-3, 3)] * 2, (600,)))
    assert rep.count == 3 and rep.stable and rep.refined_resolution == [1200, 1200]


def test_representatives_lie_in_distinct_components():
    f = mapof(["x + y*x^2", "0"])
    w = GridWindow([(-3, 3)] * 2, (200,))
    rep = preimage_components(f, [0, 0], w, check_stability=False)
    labels, _ = label_components(mark_cells(f.components, [0, 0], w))
    h = w.cell_size
    seen = {labels[tuple(int((c - lo) / s) for c, (lo, _), s in zip(p, w.bounds, h))] for p in rep.representatives}
    assert len(seen) == 3 and 0 not in seen


@pytest.mark.parametrize(
    "f,count",
    [(M.identity_map(2, XY), 1), (M.poly_family(1), 1), (M.poly_family(2), 1), (M.poly_family(3), 1)],
)
def test_connected_preimages(f, count):
    rep = preimage_components(f, [0, 0], GridWindow([(-5, 5)] * 2, (200,)))
    assert rep.count == count and rep.stable


def test_empty_preimage():
    f = mapof(["x^2 + y^2 + 1", "0"])
    rep = preimage_components(f, [0, 0], GridWindow([(-2, 2)] * 2, (64,)))
    assert rep.count == 0 and rep.representatives == [] and rep.stable


def test_preimage_dimension_checks():
    f = mapof(["x", "y"])
    with pytest.raises(ValueError):
        preimage_components(f, [0, 0], GridWindow([(0, 1)] * 3, (8,)))
    with pytest.raises(ValueError):
        preimage_components(f, [0], GridWindow([(0, 1)] * 2, (8,)))


@given(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5))
def test_marked_cells_include_every_cell_containing_a_solution(a, b):
    # the curve y = a + b*x crosses the grid; each cell containing a point of it must be marked
    f = mapof([f"y - ({a!r}) - ({b!r})*x", "0"])
    w = GridWindow([(-3, 3)] * 2, (64,))
    mask = mark_cells(f.components, [0, 0], w)
    xs = np.linspace(-2.99, 2.99, 2000)
    ys = a + b * xs
    keep = np.abs(ys) < 2.99
    ix = ((xs[keep] + 3) / w.cell_size[0]).astype(int)
    iy = ((ys[keep] + 3) / w.cell_size[1]).astype(int)
    assert mask[ix, iy].all()


# fixed sets ------------------------------------------------------------------


def test_fixed_set_of_two_allele_model_is_connected_and_contains_images():
    f = M.hw_simple(2)
    w = GridWindow([(0, 1)] * 2, (200,))
    rep = fixed_point_sample(f, w)
    assert rep.count == 1 and rep.stable
    disp = [c - v for c, v in zip(f.components, E.variables(f.vars))]
    mask = mark_cells(disp, [0, 0], w)
    # images of the map are fixed points
    rng = np.random.default_rng(1)
    pts = rng.dirichlet([1, 1, 1], 300)[:, :2]
    img = f.evaluate(pts)
    idx = np.clip((img / w.cell_size[0]).astype(int), 0, 199)
    assert mask[idx[:, 0], idx[:, 1]].all()


@pytest.mark.parametrize("comps,box", [(["x + y*x^2", "0"], 3), (["-x", "-y"], 2)])
def test_fixed_sets_are_connected(comps, box):
    rep = fixed_point_sample(mapof(comps), GridWindow([(-box, box)] * 2, (120,)))
    assert rep.count == 1 and rep.stable


def test_csv_dump(tmp_path):
    f = mapof(["x + y*x^2", "0"])
    w = GridWindow([(-3, 3)] * 2, (60,))
    path = tmp_path / "cells.csv"
    rows = write_marked_csv(str(path), f.components, [0, 0], w)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert data[0] == ["c0", "c1", "component"] and len(data) == rows + 1
    assert {r[2] for r in data[1:]} == {"1", "2", "3"}
    assert rows == int(mark_cells(f.components, [0, 0], w).sum())


# local branches --------------------------------------------------------------


@pytest.mark.parametrize("i,j", [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)])
def test_crossings_of_the_polynomial_family_have_two_branches(i, j):
    g = M.poly_family(i).components[0]
    assert local_branch_count(g, (0, j), radius=0.1) == 2


@pytest.mark.parametrize("g,point", [("x + y*x^2", (0, 5)), ("x", (0, 0)), ("x*(1-y)", (0, -2)), ("x*(1-y)", (3, 1))])
def test_regular_points_have_one_branch(g, point):
    assert local_branch_count(scalar(g), point) == 1


def test_branch_count_needs_a_point_on_the_level_set():
    with pytest.raises(ValueError):
        local_branch_count(scalar("x"), (1, 0))


# gradient scan ---------------------------------------------------------------


def test_gradient_scan_empty_for_cubic_crossing():
    assert gradient_vanish_scan(scalar("x + y*x^2"), GridWindow([(-5, 5)] * 2, (200,))) == []


def test_gradient_scan_empty_for_linear():
    assert gradient_vanish_scan(scalar("x"), GridWindow([(-5, 5)] * 2, (100,))) == []


@pytest.mark.parametrize("i", [1, 2, 3])
def test_gradient_scan_finds_family_crossings(i):
    g = M.poly_family(i).components[0]
    tol = 1e-6
    cells = gradient_vanish_scan(g, GridWindow([(-5, 5)] * 2, (100,)), tol=tol)
    assert cells
    found = {(round(c.point[0], 4), round(c.point[1], 4)) for c in cells}
    assert found == {(0.0, float(j)) for j in range(1, i + 1)}
    for c in cells:
        assert c.grad_norm <= tol
        assert abs(float(E.eval_expr(g, c.point))) <= 10 * tol


@given(st.floats(-4, 4), st.floats(-4, 4), st.floats(0.5, 2))
def test_gradient_scan_locates_quadratic_minimum(a, b, s):
    g = scalar(f"({s!r})*(x - ({a!r}))^2 + (y - ({b!r}))^2")
    cells = gradient_vanish_scan(g, GridWindow([(-5, 5)] * 2, (40,)), tol=1e-8)
    assert cells
    for c in cells:
        assert abs(c.point[0] - a) <= 1e-7 and abs(c.point[1] - b) <= 1e-7
