"""Pure numpy implementations of the hot kernels.

These must agree bit-for-bit with ``_kernels.pyx``: the index is built in
the same operation order ``(mean + radius) + bonus`` from the same inputs.
"""
import numpy as np

TERMINAL = 1
PRE_PARENT = 2
PARENT = 4


def ucb_scores(candidates, count, reward_sum, depth, jn_by_depth, radius_scale):
    n = count[candidates].astype(np.float64)
    s = reward_sum[candidates]
    mean = np.zeros_like(s)
    np.divide(s, n, out=mean, where=n > 0)
    radius = radius_scale / np.sqrt(np.maximum(n, 1.0))
    return (mean + radius) + jn_by_depth[depth[candidates]]


def select_best(candidates, count, reward_sum, depth, coords, jn_by_depth, radius_scale):
    """Candidate node id with the largest UCB index.

    Exact ties go to the shallower cube, then the lexicographically smaller
    integer address.
    """
    if len(candidates) == 0:
        raise ValueError("no candidate cubes")
    vals = ucb_scores(candidates, count, reward_sum, depth, jn_by_depth, radius_scale)
    top = vals.max()
    tied = candidates[vals == top]
    if len(tied) == 1:
        return int(tied[0])
    return int(min(tied, key=lambda c: (depth[c], tuple(coords[c]))))


def classify_flags(first_child, parent, depth, n, n_children):
    """Role bit flags for the first ``n`` nodes of a complete-children cube tree.

    Nodes are assumed stored so that a node's index exceeds its parent's.
    """
    fc = first_child[:n]
    terminal = fc < 0
    flags = terminal.astype(np.uint8) * TERMINAL
    internal = np.flatnonzero(~terminal)
    if len(internal):
        kids = fc[internal][:, None] + np.arange(n_children)
        pre = terminal[kids].any(axis=1)
        flags[internal[pre]] |= PRE_PARENT
    is_pre = (flags & PRE_PARENT) != 0
    covered = np.zeros(n, dtype=bool)  # some strict ancestor is a pre-parent
    dep = depth[:n]
    par = parent[:n]
    for k in range(1, int(dep.max()) + 1 if n else 0):
        level = np.flatnonzero(dep == k)
        p = par[level]
        covered[level] = covered[p] | is_pre[p]
    flags[is_pre & ~covered] |= PARENT
    if n and terminal[0]:
        flags[0] |= PARENT
    return flags
