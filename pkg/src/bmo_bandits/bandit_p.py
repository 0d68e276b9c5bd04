"""Bandit-BMO-P: UCB over an adaptively refined dyadic partition.

Each step plays the leaf with the largest index, draws an arm uniformly
inside it, records the observation and then splits any leaf whose
confidence radius has fallen below its measure bonus.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .cube_stats import AlgoConfig, CubeTree, IndexParams, select_among
from .dyadic import MAX_DEPTH, DyadicCube
from .envs import EnvironmentSpec, pull
from .trace import RunTrace, TraceRow


class PartitionState:
    """Current partition (the leaves of ``tree``) and the step counter."""

    def __init__(self, params: IndexParams):
        self.params = params
        self.tree = CubeTree(params.dim)
        self.step = 0
        self._jn = params.jn_table()
        self._radius = params.radius_scale

    @property
    def leaves(self) -> np.ndarray:
        return self.tree.leaf_ids()

    def leaf_cubes(self) -> list:
        return [self.tree.cubes[i] for i in self.leaves]

    def violates(self, i: int) -> bool:
        """True when leaf ``i`` breaks ``H_t(q) >= J(q)``."""
        n = max(1, int(self.tree.count[i]))
        return self._radius / np.sqrt(n) < self._jn[self.tree.depth[i]]

    def min_measure(self) -> float:
        return float(2.0 ** (-self.params.dim * int(self.tree.depth[self.leaves].max())))


def select_node(state: PartitionState) -> int:
    return select_among(state.tree, state.leaves, state.params, state._jn)


def select_cube(state: PartitionState) -> DyadicCube:
    return state.tree.cubes[select_node(state)]


def refine(state: PartitionState, touched=None) -> PartitionState:
    """Split leaves until every leaf satisfies the partition rule.

    ``touched`` limits the initial scan to leaves whose counts changed;
    other leaves cannot have started violating the rule.
    """
    tree = state.tree
    work = list(state.leaves if touched is None else touched)
    while work:
        i = work.pop()
        if tree.first_child[i] >= 0 or not state.violates(i):
            continue
        if tree.depth[i] >= MAX_DEPTH:
            raise OverflowError("partition rule demands a split past the depth cap")
        work.extend(tree.split(i))
    return state


def step(state: PartitionState, env: EnvironmentSpec, rng: np.random.Generator) -> TraceRow:
    """Play one round in place and return its trace row."""
    state.step += 1
    i = select_node(state)
    cube = state.tree.cubes[i]
    count = int(state.tree.count[i])
    a, y = pull(env, cube, rng)
    leaf = state.tree.record(a, y)
    refine(state, [leaf])
    leaves = state.leaves
    min_mu = float(2.0 ** (-state.params.dim * int(state.tree.depth[leaves].max())))
    return TraceRow(state.step, cube, (tuple(a.tolist()),), (y,), count, len(leaves), min_mu)


def run(config: AlgoConfig, env: EnvironmentSpec, seed: int,
        observer: Optional[Callable] = None) -> RunTrace:
    """Run ``config.T`` rounds; ``observer(state, row)`` is called after each one."""
    rng = np.random.default_rng(seed)
    trace = RunTrace("p", env.dim, meta=_meta(config, env, seed))
    if config.T == 0:
        trace.partition = [(env_root(env.dim), 0, 0.0)]
        return trace
    state = PartitionState(config.index_params(env.dim))
    refine(state)
    for _ in range(config.T):
        row = step(state, env, rng)
        trace.rows.append(row)
        if observer is not None:
            observer(state, row)
    trace.partition = [(state.tree.cubes[i], int(state.tree.count[i]), float(state.tree.reward_sum[i]))
                       for i in state.leaves]
    trace.tree = state.tree
    return trace


def env_root(dim):
    return DyadicCube(0, (0,) * dim)


def _meta(config, env, seed):
    return {"env": env.name, "T": config.T, "eps": config.eps, "eta": config.eta,
            "noise_bound": config.noise_bound, "alpha": None, "psi": config.psi, "seed": seed}
