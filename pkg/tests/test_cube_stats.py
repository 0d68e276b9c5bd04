import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bmo_bandits.cube_stats import (CubeTree, IndexParams, brute_force_stats, compute_psi, confidence_scale,
                                    cube_average, effective_count, hoeffding_radius, jn_bonus, record_sample,
                                    split_node, ucb_index)
from bmo_bandits.dyadic import DyadicCube


def test_psi_unit_case():
    # 2 log2(2) + ln(2 * 1 / (2/e^2)) = 2 + 2
    assert compute_psi(0.5, 1, 2 / math.e**2) == pytest.approx(4.0, rel=1e-14)


def test_psi_default_experiment_parameters():
    # mpmath: 2*log2(1000) + ln(2e10)
    assert compute_psi(0.001, 10_000, 0.01) == pytest.approx(43.6505666798245762, rel=1e-13)


@given(st.floats(1e-6, 0.999), st.integers(1, 10**6), st.floats(1e-6, 0.999))
def test_psi_dominates_both_terms(eta, T, eps):
    psi = compute_psi(eta, T, eps)
    assert psi >= 2 * math.log2(1 / eta)
    assert psi >= math.log(2 * T * T / eps)


@pytest.mark.parametrize("args", [(0.0, 10, 0.1), (1.0, 10, 0.1), (0.1, 0, 0.1), (0.1, 10, 1.5)])
def test_psi_domain(args):
    with pytest.raises(ValueError):
        compute_psi(*args)


def test_index_params_rejects_small_psi():
    with pytest.raises(ValueError):
        IndexParams(100, 0.01, 0.01, 0.0, 1, psi=1.0)


def _tree_with(ys, points=None, dim=1):
    tree = CubeTree(dim)
    for k, y in enumerate(ys):
        a = points[k] if points is not None else [0.5] * dim
        tree.record(a, y)
    return tree


@pytest.mark.parametrize("count,expected", [(0, 1), (1, 1), (7, 7)])
def test_effective_count(count, expected):
    assert effective_count(_tree_with([0.0] * count).root) == expected


def test_cube_average():
    assert cube_average(CubeTree(1).root) == 0.0
    assert cube_average(_tree_with([1.0, 3.0]).root) == 2.0
    assert cube_average(_tree_with([-4.25]).root) == -4.25


def test_confidence_scale_example():
    # (psi + D_E) = 10, T = 100, eps = 0.01, n = 4; mpmath value 26.93386134452709643
    assert confidence_scale(10.0, 100, 0.01) / math.sqrt(4) == pytest.approx(26.933861344527096, rel=1e-14)


def test_radius_scaling():
    params = IndexParams(100, 0.01, 0.01, 0.1, 1)
    fresh = hoeffding_radius(CubeTree(1).root, params)
    assert fresh == params.radius_scale
    assert hoeffding_radius(_tree_with([0.0] * 4).root, params) == fresh / 2
    radii = [hoeffding_radius(_tree_with([0.0] * n).root, params) for n in range(1, 30)]
    assert all(a > b for a, b in zip(radii, radii[1:]))


def test_jn_bonus_values():
    params = IndexParams(10, 0.1, 1 / 1024, 0.0, 2)
    assert jn_bonus(DyadicCube(5, (0, 0)), params) == 0.0  # mu = eta
    assert jn_bonus(DyadicCube(6, (0, 0)), params) == 0.0  # mu < eta
    assert jn_bonus(DyadicCube(3, (0, 0)), params) == pytest.approx(2.772588722239781, rel=1e-14)


def test_jn_bonus_drops_by_ln_doubling_per_level():
    params = IndexParams(10, 0.1, 2.0**-20, 0.0, 2)
    vals = [jn_bonus(DyadicCube(k, (0, 0)), params) for k in range(12)]
    for a, b in zip(vals, vals[1:]):
        assert b == 0.0 or a - b == pytest.approx(math.log(4), rel=1e-12)
    assert vals[-1] == 0.0


def test_ucb_index_fresh_and_clamped():
    params = IndexParams(50, 0.05, 0.01, 0.2, 1)
    fresh = CubeTree(1).root
    assert ucb_index(fresh, params) == params.radius_scale + math.log(1 / 0.01)
    tree = CubeTree(1)
    for _ in range(7):
        tree.split(tree.find_leaf([0.0]))
    tree.record([0.001], 2.0)
    small = tree.node(tree.find_leaf([0.001]))
    assert small.cube.measure <= params.eta
    assert ucb_index(small, params) == cube_average(small) + hoeffding_radius(small, params)


def test_record_sample_paths():
    tree = CubeTree(1)
    record_sample(tree, [0.3], 1.0)
    assert tree.root.count == 1
    tree.split(0)
    record_sample(tree, [0.1], 2.0)
    counts = {str(n.cube): n.count for n in [tree.root] + tree.root.children}
    assert counts == {"0:0": 2, "1:0": 2, "1:1": 0}
    with pytest.raises(ValueError):
        record_sample(tree, [0.1, 0.2], 1.0)


def test_split_rebuilds_children_from_history():
    tree = CubeTree(1)
    split_node(tree.root)
    assert [c.count for c in tree.root.children] == [0, 0]
    tree = _tree_with([1.0, 5.0], points=[[0.1], [0.6]])
    split_node(tree.root)
    kids = tree.root.children
    assert [c.count for c in kids] == [1, 1]
    assert [c.reward_sum for c in kids] == [1.0, 5.0]
    assert sorted(kids[0].point_refs + kids[1].point_refs) == tree.root.point_refs
    with pytest.raises(ValueError):
        split_node(tree.root)


@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_count_conservation_and_brute_force(dim, seed):
    rng = np.random.default_rng(seed)
    tree = CubeTree(dim)
    for step in range(60):
        tree.record(rng.random(dim), float(rng.normal()))
        if step % 7 == 0:
            leaves = tree.leaf_ids()
            tree.split(int(leaves[rng.integers(len(leaves))]))
    assert tree.root.count == 60
    for i in range(tree.n_nodes):
        kids = list(tree.children_of(i))
        if kids:
            assert tree.count[kids].sum() == tree.count[i]
            assert sorted(sum((tree.point_refs[c] for c in kids), [])) == tree.point_refs[i]
        n, s = brute_force_stats(tree, i)
        assert n == tree.count[i]
        assert s == tree.reward_sum[i]  # bit-for-bit
