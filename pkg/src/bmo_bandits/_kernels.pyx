# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled hot kernels; see _pykernels.py for the reference semantics.

Built without fast-math so results match the numpy fallback exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdint cimport int64_t, uint8_t

cnp.import_array()

DEF TERMINAL = 1
DEF PRE_PARENT = 2
DEF PARENT = 4


cdef inline bint _key_less(int64_t a, int64_t b, const int64_t[::1] depth,
                           const int64_t[:, ::1] coords) nogil:
    cdef Py_ssize_t i
    if depth[a] != depth[b]:
        return depth[a] < depth[b]
    for i in range(coords.shape[1]):
        if coords[a, i] != coords[b, i]:
            return coords[a, i] < coords[b, i]
    return False


def ucb_scores(const int64_t[::1] candidates, const int64_t[::1] count,
               const double[::1] reward_sum, const int64_t[::1] depth,
               const double[::1] jn_by_depth, double radius_scale):
    cdef Py_ssize_t i, n_cand = candidates.shape[0]
    cdef int64_t c
    cdef double n, m
    out = np.empty(n_cand, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n_cand):
            c = candidates[i]
            n = <double>count[c]
            m = reward_sum[c] / n if n > 0 else 0.0
            if n < 1.0:
                n = 1.0
            o[i] = (m + radius_scale / sqrt(n)) + jn_by_depth[depth[c]]
    return out


def select_best(const int64_t[::1] candidates, const int64_t[::1] count,
                const double[::1] reward_sum, const int64_t[::1] depth,
                const int64_t[:, ::1] coords, const double[::1] jn_by_depth,
                double radius_scale):
    cdef Py_ssize_t i, n_cand = candidates.shape[0]
    cdef int64_t c, best = -1
    cdef double n, m, val, best_val = 0.0
    if n_cand == 0:
        raise ValueError("no candidate cubes")
    with nogil:
        for i in range(n_cand):
            c = candidates[i]
            n = <double>count[c]
            m = reward_sum[c] / n if n > 0 else 0.0
            if n < 1.0:
                n = 1.0
            val = (m + radius_scale / sqrt(n)) + jn_by_depth[depth[c]]
            if best < 0 or val > best_val or (val == best_val and _key_less(c, best, depth, coords)):
                best = c
                best_val = val
    return best


def classify_flags(const int64_t[::1] first_child, const int64_t[::1] parent,
                   const int64_t[::1] depth, Py_ssize_t n, Py_ssize_t n_children):
    out = np.zeros(n, dtype=np.uint8)
    covered_arr = np.zeros(n, dtype=np.uint8)
    cdef uint8_t[::1] flags = out
    cdef uint8_t[::1] covered = covered_arr
    cdef Py_ssize_t i, j
    cdef int64_t fc, p
    with nogil:
        for i in range(n):
            fc = first_child[i]
            if fc < 0:
                flags[i] = TERMINAL
            else:
                for j in range(n_children):
                    if first_child[fc + j] < 0:
                        flags[i] = PRE_PARENT
                        break
        # children are stored after their parent, so one forward pass propagates
        for i in range(1, n):
            p = parent[i]
            covered[i] = covered[p] or (flags[p] & PRE_PARENT) != 0
        for i in range(n):
            if (flags[i] & PRE_PARENT) and not covered[i]:
                flags[i] |= PARENT
        if n > 0 and first_child[0] < 0:
            flags[0] |= PARENT
    return out
