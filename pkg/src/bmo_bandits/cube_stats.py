"""Running per-cube statistics and the UCB index ``mean + radius + bonus``.

The tree stores one row per cube in growable numpy arrays so the selection
kernels can scan it without touching Python objects.  ``CubeNode`` is a
thin view onto one row.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .dyadic import MAX_DEPTH, DyadicCube, child_slot, contains, direct_subcubes, root


def compute_psi(eta: float, T: int, eps: float) -> float:
    """Effective bound ``2 log2(1/eta) + ln(2 T^2 / eps)``."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return 2.0 * math.log2(1.0 / eta) + math.log(2.0 * T * T / eps)


def confidence_scale(bound: float, T: int, eps: float) -> float:
    """Hoeffding numerator ``bound * sqrt(2 ln(2 T^2 / eps))``; divide by sqrt(count) for the radius."""
    return bound * math.sqrt(2.0 * math.log(2.0 * T * T / eps))


@dataclass(frozen=True)
class IndexParams:
    T: int
    eps: float
    eta: float
    noise_bound: float
    dim: int
    psi: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.noise_bound < 0:
            raise ValueError(f"noise bound must be >= 0, got {self.noise_bound}")
        floor_psi = compute_psi(self.eta, self.T, self.eps)
        if self.psi is None:
            object.__setattr__(self, "psi", floor_psi)
        elif self.psi < 2 * math.log2(1 / self.eta) or self.psi < self.log_term:
            raise ValueError(f"psi={self.psi} below 2*log2(1/eta) or ln(2T^2/eps)")

    @property
    def doubling(self) -> int:
        return 1 << self.dim

    @property
    def log_term(self) -> float:
        return math.log(2.0 * self.T * self.T / self.eps)

    @property
    def radius_scale(self) -> float:
        """Numerator of the Hoeffding radius, ``(psi + D_E) sqrt(2 ln(2T^2/eps))``."""
        return confidence_scale(self.psi + self.noise_bound, self.T, self.eps)

    def jn_table(self, max_depth: int = MAX_DEPTH) -> np.ndarray:
        """``jn_bonus`` for a cube at each depth 0..max_depth."""
        return np.array([_jn(math.ldexp(1.0, -k * self.dim), self.eta) for k in range(max_depth + 1)])


@dataclass(frozen=True)
class AlgoConfig:
    """Run parameters shared by both algorithms; ``dim`` comes from the environment."""

    T: int
    eps: float = 0.01
    eta: float = 0.001
    noise_bound: float = 0.1
    alpha: float = 1.0
    psi: Optional[float] = None

    def index_params(self, dim: int) -> IndexParams:
        return IndexParams(self.T, self.eps, self.eta, self.noise_bound, dim, self.psi)


def _jn(mu, eta):
    return max(0.0, math.log(mu / eta))


class CubeTree:
    """Dyadic refinement tree with history-based counts.

    Every recorded arm is kept; ``point_refs[i]`` lists the history indices
    falling in node ``i`` so a freshly split node gets exact child stats.
    Children of a node occupy ``2**dim`` consecutive rows.
    """

    def __init__(self, dim: int, capacity: int = 256):
        self.dim = dim
        self.n_children = 1 << dim
        self.n_nodes = 0
        self.count = np.zeros(capacity, dtype=np.int64)
        self.reward_sum = np.zeros(capacity, dtype=np.float64)
        self.depth = np.zeros(capacity, dtype=np.int64)
        self.coords = np.zeros((capacity, dim), dtype=np.int64)
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.first_child = np.full(capacity, -1, dtype=np.int64)
        self.cubes = []
        self.point_refs = []
        self.arms = np.zeros((256, dim))
        self.rewards = np.zeros(256)
        self.n_points = 0
        self._add(root(dim), -1)

    def _grow_nodes(self, need):
        cap = len(self.count)
        if need <= cap:
            return
        new = max(need, 2 * cap)
        self.count = np.concatenate([self.count, np.zeros(new - cap, dtype=np.int64)])
        self.reward_sum = np.concatenate([self.reward_sum, np.zeros(new - cap)])
        self.depth = np.concatenate([self.depth, np.zeros(new - cap, dtype=np.int64)])
        self.coords = np.concatenate([self.coords, np.zeros((new - cap, self.dim), dtype=np.int64)])
        self.parent = np.concatenate([self.parent, np.full(new - cap, -1, dtype=np.int64)])
        self.first_child = np.concatenate([self.first_child, np.full(new - cap, -1, dtype=np.int64)])

    def _add(self, cube, parent):
        i = self.n_nodes
        self._grow_nodes(i + 1)
        self.depth[i] = cube.depth
        self.coords[i] = cube.coords
        self.parent[i] = parent
        self.cubes.append(cube)
        self.point_refs.append([])
        self.n_nodes += 1
        return i

    def node(self, i: int) -> "CubeNode":
        return CubeNode(self, i)

    @property
    def root(self) -> "CubeNode":
        return CubeNode(self, 0)

    def is_leaf(self, i: int) -> bool:
        return self.first_child[i] < 0

    def leaf_ids(self) -> np.ndarray:
        return np.flatnonzero(self.first_child[: self.n_nodes] < 0)

    def children_of(self, i: int) -> range:
        fc = int(self.first_child[i])
        return range(0) if fc < 0 else range(fc, fc + self.n_children)

    def find_leaf(self, a) -> int:
        i = 0
        while self.first_child[i] >= 0:
            i = int(self.first_child[i]) + child_slot(self.cubes[i], a)
        return i

    def find(self, cube: DyadicCube) -> Optional[int]:
        """Node id holding exactly ``cube``, or None when it is not in the tree."""
        i = 0
        for k in range(1, cube.depth + 1):
            if self.first_child[i] < 0:
                return None
            anc = cube.ancestor(k)
            j = sum(((m & 1) << b) for b, m in enumerate(anc.coords))
            i = int(self.first_child[i]) + j
        return i

    def record(self, a, y: float) -> int:
        """Add observation ``(a, y)`` along the root-to-leaf path through ``a``."""
        a = np.asarray(a, dtype=float)
        if a.shape != (self.dim,):
            raise ValueError(f"arm of shape {a.shape} in a {self.dim}-d tree")
        if not contains(self.cubes[0], a):
            raise ValueError(f"arm {a} outside [0,1)^{self.dim}")
        p = self.n_points
        if p == len(self.rewards):
            self.arms = np.concatenate([self.arms, np.zeros_like(self.arms)])
            self.rewards = np.concatenate([self.rewards, np.zeros_like(self.rewards)])
        self.arms[p] = a
        self.rewards[p] = y
        self.n_points += 1
        i = 0
        while True:
            self.count[i] += 1
            self.reward_sum[i] += y
            self.point_refs[i].append(p)
            if self.first_child[i] < 0:
                return i
            i = int(self.first_child[i]) + child_slot(self.cubes[i], a)

    def split(self, i: int) -> range:
        """Create the ``2**dim`` children of leaf ``i`` with stats rebuilt from its history."""
        if self.first_child[i] >= 0:
            raise ValueError(f"node {self.cubes[i]} is already split")
        kids = direct_subcubes(self.cubes[i])
        first = self.n_nodes
        self._grow_nodes(first + len(kids))
        for c in kids:
            self._add(c, i)
        self.first_child[i] = first
        refs = self.point_refs[i]
        if refs:
            idx = np.asarray(refs, dtype=np.int64)
            k = int(self.depth[i]) + 1
            bits = np.floor(np.ldexp(self.arms[idx], k)).astype(np.int64) - 2 * self.coords[i]
            slot = (bits << np.arange(self.dim)).sum(axis=1)
            for j in range(self.n_children):
                mine = idx[slot == j]
                node = first + j
                self.count[node] = len(mine)
                # sequential sum in history order, identical to incremental accumulation
                s = 0.0
                for r in self.rewards[mine]:
                    s += r
                self.reward_sum[node] = s
                self.point_refs[node] = mine.tolist()
        return range(first, first + len(kids))


class CubeNode:
    """View of one tree row exposing the cube and its running statistics."""

    __slots__ = ("tree", "index")

    def __init__(self, tree: CubeTree, index: int):
        self.tree = tree
        self.index = index

    @property
    def cube(self) -> DyadicCube:
        return self.tree.cubes[self.index]

    @property
    def count(self) -> int:
        return int(self.tree.count[self.index])

    @property
    def reward_sum(self) -> float:
        return float(self.tree.reward_sum[self.index])

    @property
    def point_refs(self) -> list:
        return self.tree.point_refs[self.index]

    @property
    def children(self) -> list:
        return [CubeNode(self.tree, c) for c in self.tree.children_of(self.index)]

    @property
    def is_leaf(self) -> bool:
        return self.tree.is_leaf(self.index)

    def __eq__(self, other):
        return isinstance(other, CubeNode) and other.tree is self.tree and other.index == self.index

    def __hash__(self):
        return hash((id(self.tree), self.index))

    def __repr__(self):
        return f"CubeNode({self.cube}, count={self.count}, sum={self.reward_sum:.6g})"


def effective_count(node: CubeNode) -> int:
    return max(1, node.count)


def cube_average(node: CubeNode) -> float:
    n = node.count
    return node.reward_sum / n if n > 0 else 0.0


def hoeffding_radius(node: CubeNode, params: IndexParams) -> float:
    return params.radius_scale / math.sqrt(effective_count(node))


def jn_bonus(q: DyadicCube, params: IndexParams) -> float:
    """Positive part of ``ln(mu(q) / eta)``."""
    return _jn(q.measure, params.eta)


def ucb_index(node: CubeNode, params: IndexParams) -> float:
    return (cube_average(node) + hoeffding_radius(node, params)) + jn_bonus(node.cube, params)


def record_sample(tree: CubeTree, a, y: float) -> CubeTree:
    tree.record(a, y)
    return tree


def split_node(node: CubeNode) -> CubeNode:
    node.tree.split(node.index)
    return node


def brute_force_stats(tree: CubeTree, i: int):
    """(count, reward_sum) of node ``i`` by scanning the whole arm history."""
    cube = tree.cubes[i]
    n, s = 0, 0.0
    for p in range(tree.n_points):
        if contains(cube, tree.arms[p]):
            n += 1
            s += tree.rewards[p]
    return n, s


def select_among(tree: CubeTree, candidates: np.ndarray, params: IndexParams, jn_by_depth=None) -> int:
    """Argmax of the UCB index over ``candidates`` with deterministic tie-break."""
    if jn_by_depth is None:
        jn_by_depth = params.jn_table()
    return int(kernels.select_best(
        np.ascontiguousarray(candidates, dtype=np.int64),
        tree.count, tree.reward_sum, tree.depth, tree.coords,
        jn_by_depth, params.radius_scale,
    ))
