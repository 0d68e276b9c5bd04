import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmo_bandits import kernels
from bmo_bandits.cube_stats import CubeTree, IndexParams

BACKENDS = sorted(kernels.BACKENDS)
needs_compiled = pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")


def _random_tree(seed, dim, n_points=40, n_splits=12):
    rng = np.random.default_rng(seed)
    tree = CubeTree(dim)
    for _ in range(n_points):
        tree.record(rng.random(dim), float(rng.normal()))
    for _ in range(n_splits):
        leaves = tree.leaf_ids()
        tree.split(int(leaves[rng.integers(len(leaves))]))
    return tree


def _flat(count, means, depth=None, coords=None):
    n = len(count)
    count = np.asarray(count, dtype=np.int64)
    sums = np.asarray(means, dtype=float) * np.maximum(count, 1)
    depth = np.zeros(n, dtype=np.int64) if depth is None else np.asarray(depth, dtype=np.int64)
    coords = np.zeros((n, 1), dtype=np.int64) if coords is None else np.asarray(coords, dtype=np.int64)
    return count, sums, depth, coords


@pytest.mark.parametrize("name", BACKENDS)
def test_argmax(name):
    mod = kernels.BACKENDS[name]
    count, sums, depth, coords = _flat([1, 1], [5.0, 3.0], depth=[1, 1], coords=[[0], [1]])
    jn = np.zeros(61)
    cand = np.array([0, 1], dtype=np.int64)
    assert mod.select_best(cand, count, sums, depth, coords, jn, 0.0) == 0
    count, sums, depth, coords = _flat([1, 1], [3.0, 5.0], depth=[1, 1], coords=[[0], [1]])
    assert mod.select_best(cand, count, sums, depth, coords, jn, 0.0) == 1
    assert mod.select_best(cand[:1], count, sums, depth, coords, jn, 0.0) == 0


@pytest.mark.parametrize("name", BACKENDS)
def test_tie_break(name):
    mod = kernels.BACKENDS[name]
    jn = np.zeros(61)
    # same index everywhere: shallower wins, then lexicographically smaller address
    count, sums, depth, coords = _flat([3, 3, 3, 3], [1.0] * 4, depth=[2, 1, 1, 2],
                                       coords=[[0, 0], [1, 0], [0, 1], [0, 1]])
    cand = np.array([0, 1, 2, 3], dtype=np.int64)
    assert mod.select_best(cand, count, sums, depth, coords, jn, 1.0) == 2
    assert mod.select_best(np.array([3, 0], dtype=np.int64), count, sums, depth, coords, jn, 1.0) == 0


@pytest.mark.parametrize("name", BACKENDS)
def test_empty_candidates(name):
    count, sums, depth, coords = _flat([1], [0.0])
    with pytest.raises(ValueError):
        kernels.BACKENDS[name].select_best(np.array([], dtype=np.int64), count, sums, depth, coords,
                                           np.zeros(61), 1.0)


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1), st.floats(0.0, 500.0))
def test_backends_bit_identical(dim, seed, scale):
    tree = _random_tree(seed, dim)
    params = IndexParams(100, 0.1, 2.0 ** (-3 * dim), 0.0, dim)
    jn = params.jn_table()
    cand = tree.leaf_ids()
    py, cc = kernels.BACKENDS["python"], kernels.BACKENDS["compiled"]
    args = (tree.count, tree.reward_sum, tree.depth)
    a = py.ucb_scores(cand, *args, jn, scale)
    b = np.asarray(cc.ucb_scores(cand, *args, jn, scale))
    assert a.tobytes() == b.tobytes()
    assert (py.select_best(cand, *args, tree.coords, jn, scale)
            == cc.select_best(cand, *args, tree.coords, jn, scale))
    fa = py.classify_flags(tree.first_child, tree.parent, tree.depth, tree.n_nodes, tree.n_children)
    fb = np.asarray(cc.classify_flags(tree.first_child, tree.parent, tree.depth, tree.n_nodes, tree.n_children))
    assert fa.tolist() == fb.tolist()


def _roles_by_definition(tree):
    """Terminal / pre-parent / parent flags straight from the cube definitions."""
    cubes = tree.cubes[: tree.n_nodes]
    members = set(cubes)
    terminal = {c for c in cubes if not any(o != c and c.contains_cube(o) for o in members)}
    pre = {c for c in cubes if any(t.depth == c.depth + 1 and c.contains_cube(t) for t in terminal)}
    parent = {c for c in pre if not any(p != c and p.contains_cube(c) for p in pre)}
    if cubes[0] in terminal:
        parent.add(cubes[0])
    out = []
    for c in cubes:
        out.append((kernels.TERMINAL if c in terminal else 0) | (kernels.PRE_PARENT if c in pre else 0)
                   | (kernels.PARENT if c in parent else 0))
    return out


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("dim,seed", list(itertools.product([1, 2], range(15))))
def test_classify_matches_definition(name, dim, seed):
    tree = _random_tree(seed, dim, n_points=0, n_splits=seed % 9)
    flags = kernels.BACKENDS[name].classify_flags(tree.first_child, tree.parent, tree.depth,
                                                  tree.n_nodes, tree.n_children)
    assert list(map(int, flags)) == _roles_by_definition(tree)


def test_use_backend_switch():
    before = kernels.backend
    try:
        kernels.use_backend("python")
        assert kernels.select_best is kernels.BACKENDS["python"].select_best
        with pytest.raises(ValueError):
            kernels.use_backend("fortran")
    finally:
        kernels.use_backend(before)
