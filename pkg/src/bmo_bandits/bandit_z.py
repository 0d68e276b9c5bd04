"""Bandit-BMO-Z: zooming over a growing collection of dyadic cubes.

The collection is a cube tree in which every split adds all ``M_d``
children.  Childless cubes are terminal, direct super cubes of terminal
cubes are pre-parents, and the topmost pre-parents are parents; the
parents tile the arm space.  Each episode picks the parent with the
largest index and plays one uniform arm in each of its direct sub-cubes.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from . import kernels
from .cube_stats import AlgoConfig, CubeTree, IndexParams, select_among
from .dyadic import MAX_DEPTH, direct_subcubes, is_partition, root
from .envs import EnvironmentSpec, pull
from .trace import RunTrace, TraceRow

TERMINAL = "terminal"
PRE_PARENT = "pre-parent"
PARENT = "parent"
OTHER = "other"


def max_alpha(params: IndexParams) -> float:
    return params.radius_scale / math.log(params.doubling / params.eta)


def check_alpha(params: IndexParams, alpha: float) -> None:
    hi = max_alpha(params)
    if not 0.0 < alpha <= hi:
        raise ValueError(
            f"alpha={alpha} outside (0, (psi + D_E) sqrt(2 ln(2T^2/eps)) / ln(M_d/eta)] = (0, {hi:.6g}]")


def warmup_count(params: IndexParams, alpha: float) -> int:
    """Largest n with ``C / sqrt(n) >= alpha ln(M_d/eta)``."""
    check_alpha(params, alpha)
    C = params.radius_scale
    level = alpha * math.log(params.doubling / params.eta)
    n = max(1, math.floor((C / level) ** 2))
    # guard the float floor against off-by-one at exact boundaries
    while n > 1 and C / math.sqrt(n) < level:
        n -= 1
    while C / math.sqrt(n + 1) >= level:
        n += 1
    return n


class CubeCollection:
    def __init__(self, params: IndexParams, alpha: float):
        check_alpha(params, alpha)
        self.params = params
        self.alpha = alpha
        self.tree = CubeTree(params.dim)
        self.episode = 0
        self._jn = params.jn_table()

    @property
    def size(self) -> int:
        return self.tree.n_nodes

    def violates(self, i: int) -> bool:
        """True when cube ``i`` breaks ``H_t(Q) >= alpha ln(M_d mu(Q) / eta)``."""
        tree = self.tree
        n = max(1, int(tree.count[i]))
        mu = math.ldexp(1.0, -int(tree.depth[i]) * self.params.dim)
        level = self.alpha * math.log(self.params.doubling * mu / self.params.eta)
        return self.params.radius_scale / math.sqrt(n) < level

    def flags(self) -> np.ndarray:
        t = self.tree
        return kernels.classify_flags(t.first_child, t.parent, t.depth, t.n_nodes, t.n_children)

    def parent_ids(self) -> np.ndarray:
        return np.flatnonzero(self.flags() & kernels.PARENT)

    def min_measure(self) -> float:
        return float(2.0 ** (-self.params.dim * int(self.tree.depth[: self.tree.n_nodes].max())))


def classify(collection: CubeCollection) -> dict:
    """Map each cube to its set of roles.

    The root is a parent by convention while it is terminal.  Raises
    RuntimeError when the parents fail to tile the arm space.
    """
    flags = collection.flags()
    roles = {}
    for i, fl in enumerate(flags):
        r = set()
        if fl & kernels.TERMINAL:
            r.add(TERMINAL)
        if fl & kernels.PRE_PARENT:
            r.add(PRE_PARENT)
        if fl & kernels.PARENT:
            r.add(PARENT)
        roles[collection.tree.cubes[i]] = frozenset(r) if r else frozenset({OTHER})
    parents = [c for c, r in roles.items() if PARENT in r]
    if not is_partition(parents):
        raise RuntimeError("parent cubes do not partition the arm space")
    return roles


def zoom_refine(collection: CubeCollection, touched=None) -> CubeCollection:
    """Add children under terminal cubes until every terminal cube obeys the zooming rule."""
    tree = collection.tree
    work = list(tree.leaf_ids() if touched is None else touched)
    while work:
        i = work.pop()
        if tree.first_child[i] >= 0 or not collection.violates(i):
            continue
        if tree.depth[i] >= MAX_DEPTH:
            raise OverflowError("zooming rule demands a split past the depth cap")
        work.extend(tree.split(i))
    return collection


def select_parent(collection: CubeCollection) -> int:
    return select_among(collection.tree, collection.parent_ids(), collection.params, collection._jn)


def warmup(collection: CubeCollection, env: EnvironmentSpec, rng: np.random.Generator) -> list:
    rows = []
    tree = collection.tree
    whole = root(collection.params.dim)
    for k in range(warmup_count(collection.params, collection.alpha)):
        count = int(tree.count[0])
        a, y = pull(env, whole, rng)
        tree.record(a, y)
        rows.append(TraceRow(k + 1, whole, (tuple(a.tolist()),), (y,), count, tree.n_nodes, 1.0, "warmup"))
    zoom_refine(collection)
    return rows


def play_episode(collection: CubeCollection, env: EnvironmentSpec, rng: np.random.Generator) -> TraceRow:
    """One episode in place: select a parent, pull once in each direct sub-cube, refine."""
    collection.episode += 1
    tree = collection.tree
    i = select_parent(collection)
    parent = tree.cubes[i]
    count = int(tree.count[i])
    arms, ys, touched = [], [], []
    # sub-cubes need not be in the collection (terminal root); their extents suffice
    for sub in direct_subcubes(parent):
        a, y = pull(env, sub, rng)
        touched.append(tree.record(a, y))
        arms.append(tuple(a.tolist()))
        ys.append(y)
    zoom_refine(collection, touched)
    return TraceRow(collection.episode, parent, tuple(arms), tuple(ys), count,
                    collection.size, collection.min_measure())


def run(config: AlgoConfig, env: EnvironmentSpec, seed: int,
        observer: Optional[Callable] = None) -> RunTrace:
    """Warm-up followed by ``config.T`` episodes; ``observer(collection, row)`` after each episode."""
    rng = np.random.default_rng(seed)
    trace = RunTrace("z", env.dim, meta=_meta(config, env, seed))
    params = config.index_params(env.dim) if config.T > 0 else None
    if params is None:
        trace.partition = [(root(env.dim), 0, 0.0)]
        return trace
    collection = CubeCollection(params, config.alpha)
    trace.rows.extend(warmup(collection, env, rng))
    for _ in range(config.T):
        row = play_episode(collection, env, rng)
        trace.rows.append(row)
        if observer is not None:
            observer(collection, row)
    tree = collection.tree
    trace.partition = [(tree.cubes[i], int(tree.count[i]), float(tree.reward_sum[i])) for i in tree.leaf_ids()]
    trace.tree = tree
    trace.meta["n_warm"] = trace.n_warmup
    return trace


def _meta(config, env, seed):
    return {"env": env.name, "T": config.T, "eps": config.eps, "eta": config.eta,
            "noise_bound": config.noise_bound, "alpha": config.alpha, "psi": config.psi, "seed": seed}
