import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.errors import DomainError, InvalidInputError
from mwlab.grid import (DyadicCube, GridFunction, GridGeometry, block_means, cube_at,
                        from_morton, load_gfn, p_average, save_gfn, to_morton, tree_sum)


def test_geometry_caps():
    with pytest.raises(InvalidInputError):
        GridGeometry(3, 2)
    with pytest.raises(InvalidInputError):
        GridGeometry(2, 13)
    g = GridGeometry(2, 3)
    assert g.n_cells == 64 and g.cell_measure == 2.0 ** -6


def test_children_partition_parent():
    q = DyadicCube(2, (1, 3))
    kids = q.children()
    assert len(kids) == 4
    assert sum(k.measure() for k in kids) == q.measure()
    assert all(k.parent() == q for k in kids)


@pytest.mark.parametrize("d,L", [(1, 5), (2, 3)])
def test_morton_ranges_are_the_cube_cells(d, L):
    g = GridGeometry(d, L)
    idx = np.arange(g.n_cells, dtype=float).reshape(g.shape)
    mort = to_morton(idx, g)
    np.testing.assert_array_equal(from_morton(mort, g), idx)
    for cube in g.all_cubes():
        a, b = cube.morton_range(g)
        assert sorted(mort[a:b]) == sorted(idx[cube.box(g).slices].ravel())
        assert cube_at(cube.level, a // (b - a), d) == cube


def test_p_average_examples(rng):
    g = GridGeometry(1, 4)
    q = DyadicCube(1, (1,))
    assert p_average(GridFunction(g, np.full(16, -3.0)), q, 2.5) == pytest.approx(3.0)
    half = np.zeros(16)
    half[8:12] = 1.0
    assert p_average(GridFunction(g, half), q, 1) == pytest.approx(0.5)
    f = rng.standard_normal((16, 2))
    got = p_average(GridFunction(g, f), q, 3)
    direct = np.mean(np.linalg.norm(f[8:16], axis=1) ** 3) ** (1 / 3)
    assert got == pytest.approx(direct, rel=1e-15)
    with pytest.raises(DomainError):
        p_average(GridFunction(g, f), q, 0.5)


def test_grid_function_rejects_bad_values():
    g = GridGeometry(1, 3)
    with pytest.raises(InvalidInputError):
        GridFunction(g, np.full(8, np.inf))
    with pytest.raises(InvalidInputError):
        GridFunction(g, np.zeros((8, 9)))


def test_gfn_round_trip(tmp_path, rng):
    g = GridGeometry(2, 3)
    f = GridFunction(g, rng.standard_normal((8, 8, 3)))
    path = tmp_path / "f.gfn"
    save_gfn(path, f)
    back = load_gfn(path)
    assert back.geometry == g
    np.testing.assert_array_equal(back.values, f.values)


def test_triple_is_clipped():
    g = GridGeometry(1, 4)
    box = DyadicCube(1, (0,)).triple(g)
    assert box.lo == (0,) and box.hi == (16,)
    box = DyadicCube(2, (1,)).triple(g)
    assert box.lo == (0,) and box.hi == (12,)


@given(st.integers(0, 6).flatmap(lambda k: st.lists(st.floats(-1e6, 1e6), min_size=2 ** k,
                                                    max_size=2 ** k)))
def test_tree_sum_matches_fsum(xs):
    import math
    got = tree_sum(np.array(xs))
    assert got == pytest.approx(math.fsum(xs), abs=1e-6 * max(1.0, max(map(abs, xs))))


@given(st.integers(1, 6), st.integers(0, 2 ** 31))
def test_block_means_nest(L, seed):
    x = np.random.default_rng(seed).random(2 ** L)
    for b in (2 ** k for k in range(L)):
        coarse = block_means(x, 2 * b)
        fine = block_means(x, b)
        np.testing.assert_allclose(coarse, fine.reshape(-1, 2).mean(axis=1), rtol=1e-14)


def test_tree_sum_rejects_odd_length():
    with pytest.raises(InvalidInputError):
        tree_sum(np.zeros(3))


def test_all_cubes_count():
    g = GridGeometry(2, 3)
    assert len(g.all_cubes()) == sum(4 ** l for l in range(4))
    assert len(set(g.all_cubes())) == len(g.all_cubes())
    levels = [c.level for c in g.all_cubes()]
    assert levels == sorted(levels)
    assert all(a.contains(b) == (b.ancestor(a.level) == a if b.level >= a.level else False)
               for a, b in itertools.islice(itertools.product(g.all_cubes(), repeat=2), 500))
