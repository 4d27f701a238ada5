"""Simplex grid enumeration and piecewise-linear interpolation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackmfg import GridSizeError, GridTable, OffSimplexError, build_grid, interpolate
from stackmfg.grids import simplex_weights


def test_dim2_res4_points():
    grid = build_grid(2, 4)
    expected = [(0.0, 1.0), (0.25, 0.75), (0.5, 0.5), (0.75, 0.25), (1.0, 0.0)]
    assert grid.n_points == 5
    assert [tuple(p) for p in grid.points] == expected


def test_degenerate_dim1():
    grid = build_grid(1, 10)
    assert grid.n_points == 1
    assert tuple(grid.points[0]) == (1.0,)


def test_dim3_res2_count():
    # compositions of 2 into 3 parts: (0,0,2),(0,1,1),(0,2,0),(1,0,1),(1,1,0),(2,0,0)
    grid = build_grid(3, 2)
    assert grid.n_points == 6
    assert np.all(grid.compositions.sum(axis=1) == 2)


@pytest.mark.parametrize("dim,res", [(2, 7), (3, 5), (4, 3)])
def test_point_count_formula(dim, res):
    import math
    assert build_grid(dim, res).n_points == math.comb(res + dim - 1, dim - 1)


def test_size_cap():
    with pytest.raises(GridSizeError):
        build_grid(6, 200)
    with pytest.raises(GridSizeError):
        build_grid(3, 100, max_points=1000)
    build_grid(3, 100, max_points=10 ** 6)    # raising the cap allows it


def test_interpolate_line():
    grid = build_grid(2, 1)                   # points (0,1), (1,0)
    table = GridTable(grid, np.array([[0.0], [1.0]]))
    assert interpolate(table, [0.3, 0.7], 0) == pytest.approx(0.3, abs=1e-15)


def test_interpolate_exact_at_nodes():
    grid = build_grid(3, 4)
    rng = np.random.default_rng(5)
    table = GridTable(grid, rng.normal(size=(grid.n_points, 2)))
    for i in range(grid.n_points):
        for state in range(2):
            assert interpolate(table, grid.points[i], state) == table.values[i, state]


def test_kuhn_dim3_m1_barycentric():
    # Single-cell grid: weights are the coordinates themselves.
    grid = build_grid(3, 1)                   # lex order: (0,0,1),(0,1,0),(1,0,0)
    table = GridTable(grid, np.array([[1.0], [2.0], [3.0]]))
    # 0.5*1 + 0.3*2 + 0.2*3, frozen by hand
    assert interpolate(table, [0.2, 0.3, 0.5], 0) == pytest.approx(1.7, abs=1e-12)


def test_kuhn_dim3_m2_frozen():
    # Hand-worked stencil for p=(0.3,0.45,0.25) at m=2:
    # vertices (1,1,0)/2, (1,0,1)/2, (0,1,1)/2 with weights 0.5, 0.1, 0.4;
    # values = lattice index in lex order gives 0.5*4 + 0.1*3 + 0.4*1 = 2.7.
    grid = build_grid(3, 2)
    table = GridTable(grid, np.arange(grid.n_points, dtype=float)[:, None])
    assert interpolate(table, [0.3, 0.45, 0.25], 0) == pytest.approx(2.7, abs=1e-12)


@given(st.integers(2, 4), st.integers(1, 6), st.integers(0, 10 ** 6))
@settings(max_examples=60, deadline=None)
def test_affine_reproduction(dim, res, seed):
    """Interpolating a table that samples an affine function reproduces it."""
    rng = np.random.default_rng(seed)
    grid = build_grid(dim, res)
    coeff = rng.normal(size=dim)
    offset = rng.normal()
    table = GridTable(grid, (grid.points @ coeff + offset)[:, None])
    p = rng.dirichlet(np.ones(dim))
    expected = float(p @ coeff + offset)
    assert interpolate(table, p, 0) == pytest.approx(expected, abs=1e-10)


def test_weights_are_convex():
    rng = np.random.default_rng(11)
    grid = build_grid(4, 5)
    for _ in range(200):
        p = rng.dirichlet(np.ones(4))
        idx, w = simplex_weights(grid, p)
        assert np.all(w > 0)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(w @ grid.points[idx], p, atol=1e-9)


@pytest.mark.parametrize("dim,res", [(2, 6), (3, 6), (4, 5)])
def test_lipschitz_bound(dim, res):
    """1-norm Lipschitz constant bounded by resolution * max |value|."""
    grid = build_grid(dim, res)
    rng = np.random.default_rng(2)
    table = GridTable(grid, rng.uniform(-1, 1, size=(grid.n_points, 1)))
    bound = grid.resolution * np.max(np.abs(table.values))
    for _ in range(300):
        p = rng.dirichlet(np.ones(dim))
        q = rng.dirichlet(np.ones(dim))
        gap = abs(interpolate(table, p, 0) - interpolate(table, q, 0))
        assert gap <= bound * np.sum(np.abs(p - q)) + 1e-12


def test_off_simplex_rejected():
    grid = build_grid(2, 4)
    table = GridTable(grid, np.zeros((5, 1)))
    with pytest.raises(OffSimplexError):
        interpolate(table, [0.7, 0.7], 0)
    with pytest.raises(OffSimplexError):
        interpolate(table, [-0.2, 1.2], 0)
    # tiny drift inside tolerance is renormalized, not rejected
    interpolate(table, [0.5 + 1e-12, 0.5], 0)


def test_rejects_nonfinite_table():
    grid = build_grid(2, 2)
    with pytest.raises(ValueError):
        GridTable(grid, np.array([[np.nan]] * grid.n_points))
