"""Dyadic cubes of the unit cube [0, 1)^d.

A cube is addressed by its depth ``k`` and integer coordinates ``m`` and
represents ``prod_i [m_i 2^-k, (m_i + 1) 2^-k)``.  Containment and
subdivision work on the integer address, so half-open boundaries are
classified exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

MAX_DEPTH = 60


@dataclass(frozen=True)
class DyadicCube:
    depth: int
    coords: tuple

    def __post_init__(self):
        if not self.coords:
            raise ValueError("a dyadic cube needs at least one coordinate")
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth {self.depth} outside [0, {MAX_DEPTH}]")
        side = 1 << self.depth
        for m in self.coords:
            if not 0 <= m < side:
                raise ValueError(f"coordinate {m} outside [0, {side}) at depth {self.depth}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def edge(self) -> float:
        return math.ldexp(1.0, -self.depth)

    @property
    def measure(self) -> float:
        return math.ldexp(1.0, -self.depth * self.dim)

    @property
    def sort_key(self):
        """Tie-break order: shallower first, then lexicographic coordinates."""
        return (self.depth, self.coords)

    def bounds(self):
        """Lower and upper corners as float arrays (exact binary fractions)."""
        lo = np.ldexp(np.asarray(self.coords, dtype=float), -self.depth)
        return lo, lo + self.edge

    def contains(self, a) -> bool:
        return contains(self, a)

    def contains_cube(self, other: "DyadicCube") -> bool:
        """True when ``other`` is a (not necessarily proper) sub-cube of self."""
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        if other.depth < self.depth:
            return False
        shift = other.depth - self.depth
        return all((mo >> shift) == ms for mo, ms in zip(other.coords, self.coords))

    def ancestor(self, depth: int) -> "DyadicCube":
        if not 0 <= depth <= self.depth:
            raise ValueError(f"no ancestor at depth {depth} for a depth-{self.depth} cube")
        shift = self.depth - depth
        return DyadicCube(depth, tuple(m >> shift for m in self.coords))

    def __str__(self):
        return f"{self.depth}:" + ",".join(str(m) for m in self.coords)

    @classmethod
    def parse(cls, text: str) -> "DyadicCube":
        """Inverse of ``str``: ``"k:m1,m2,...,md"``."""
        try:
            head, tail = text.strip().split(":")
            return cls(int(head), tuple(int(m) for m in tail.split(",")))
        except ValueError as exc:
            raise ValueError(f"malformed cube address {text!r}") from exc


def root(d: int) -> DyadicCube:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    return DyadicCube(0, (0,) * d)


def direct_subcubes(q: DyadicCube) -> list:
    """The 2^d children of ``q``; bit i of the child index selects the upper half on axis i."""
    if q.depth >= MAX_DEPTH:
        raise OverflowError(f"cannot subdivide below depth {MAX_DEPTH}")
    base = [2 * m for m in q.coords]
    out = []
    for j in range(1 << q.dim):
        out.append(DyadicCube(q.depth + 1, tuple(b + ((j >> i) & 1) for i, b in enumerate(base))))
    return out


def direct_supercube(q: DyadicCube) -> Optional[DyadicCube]:
    if q.depth == 0:
        return None
    return DyadicCube(q.depth - 1, tuple(m >> 1 for m in q.coords))


def child_slot(q: DyadicCube, a: Sequence[float]) -> int:
    """Index (as in ``direct_subcubes``) of the child of ``q`` holding point ``a``."""
    j = 0
    for i, (m, x) in enumerate(zip(q.coords, a)):
        if math.floor(math.ldexp(x, q.depth + 1)) - 2 * m:
            j |= 1 << i
    return j


def contains(q: DyadicCube, a: Sequence[float]) -> bool:
    if len(a) != q.dim:
        raise ValueError(f"point of dimension {len(a)} used with a {q.dim}-d cube")
    # scaling by a power of two is exact, so floor() sees the true cell index
    return all(0.0 <= x < 1.0 and math.floor(math.ldexp(x, q.depth)) == m for m, x in zip(q.coords, a))


def measure(q: DyadicCube) -> float:
    return q.measure


def sample_uniform(q: DyadicCube, rng: np.random.Generator) -> np.ndarray:
    """Draw a point uniformly from ``q`` using ``q.dim`` doubles from ``rng``."""
    lo, hi = q.bounds()
    a = lo + rng.random(q.dim) * q.edge
    # lo + u*edge can round up onto the open upper face
    over = a >= hi
    if over.any():
        a[over] = np.nextafter(hi[over], lo[over])
    return a


def is_partition(cubes: Sequence[DyadicCube]) -> bool:
    """Exact check that ``cubes`` tile [0, 1)^d: disjoint and of total measure one."""
    if not cubes:
        return False
    d = cubes[0].dim
    deepest = max(c.depth for c in cubes)
    total = sum(1 << (d * (deepest - c.depth)) for c in cubes)
    if total != 1 << (d * deepest):
        return False
    keys = {c for c in cubes}
    if len(keys) != len(cubes):
        return False
    # dyadic cubes overlap only by nesting, so disjointness = no member has an ancestor in the set
    for c in cubes:
        for k in range(c.depth):
            if c.ancestor(k) in keys:
                return False
    return True
