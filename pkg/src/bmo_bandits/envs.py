"""Reward environments on [0, 1)^d, including unbounded BMO functions.

Each environment carries its raw reward ``raw_f`` and the constant
``mean_shift`` that centres it, so the reward the algorithms see,
``f = raw_f - mean_shift``, averages to zero over the arm space.  Noise is
uniform on ``[-noise_bound, noise_bound]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .dyadic import DyadicCube, sample_uniform

GRID_POINTS = 10**6
EXTREMA_GRID = 2048


class SingularArm(ValueError):
    """The reward is not finite at the drawn arm (a measure-zero event)."""


class MeanEstimate(NamedTuple):
    value: float
    stderr: float


@dataclass
class EnvironmentSpec:
    name: str
    dim: int
    raw_f: Callable
    mean_shift: float
    noise_bound: float = 0.0
    noise_kind: str = "uniform"
    analytic_cube_mean: Optional[Callable] = None  # (lo, hi) -> raw mean over the box
    analytic_level_measure: Optional[Callable] = None  # z -> mu({raw_f > z})
    finite_max: Optional[float] = None  # sup of raw_f when finite
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def f(self, points) -> np.ndarray:
        """Centred reward at an ``(n, dim)`` array of arms."""
        return self.raw_f(np.atleast_2d(points)) - self.mean_shift

    def noise(self, rng: np.random.Generator, size=None):
        if self.noise_bound == 0:
            return 0.0 if size is None else np.zeros(size)
        return rng.uniform(-self.noise_bound, self.noise_bound, size)

    @property
    def centred_max(self) -> Optional[float]:
        return None if self.finite_max is None else self.finite_max - self.mean_shift

    def with_noise(self, noise_bound: float) -> "EnvironmentSpec":
        return replace(self, noise_bound=noise_bound, _cache=self._cache)


def observe(env: EnvironmentSpec, a, rng: np.random.Generator) -> float:
    """Noisy reward ``f(a) + E`` with ``|E| <= noise_bound``."""
    value = float(env.f(np.asarray(a, dtype=float).reshape(1, -1))[0])
    if not math.isfinite(value):
        raise SingularArm(f"reward not finite at {a}")
    return value + float(env.noise(rng))


def pull(env: EnvironmentSpec, cube: DyadicCube, rng: np.random.Generator, max_redraws: int = 64):
    """Draw an arm uniformly in ``cube`` and observe it.

    A draw landing on a singular point is redrawn in the same cube; the
    redraw keeps the uniform law since the singular set has measure zero.
    """
    for _ in range(max_redraws):
        a = sample_uniform(cube, rng)
        try:
            return a, observe(env, a, rng)
        except SingularArm:
            continue
    raise SingularArm(f"{max_redraws} consecutive singular draws in {cube}")


def _as_box(q):
    if isinstance(q, DyadicCube):
        return q.bounds()
    lo, hi = q
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def cube_mean(env: EnvironmentSpec, q, budget: int = 4096, raw: bool = False, seed: int = 0) -> MeanEstimate:
    """Mean of the reward over a dyadic cube or an ``(lo, hi)`` box.

    Uses the closed form when the environment has one, else scrambled
    Sobol quadrature over 8 independent scramblings (the spread of those
    gives the standard error).
    """
    if budget < 1:
        raise ValueError("quadrature budget must be positive")
    lo, hi = _as_box(q)
    shift = 0.0 if raw else env.mean_shift
    if env.analytic_cube_mean is not None:
        return MeanEstimate(float(env.analytic_cube_mean(lo, hi)) - shift, 0.0)
    reps = 8
    m = max(1, budget // reps)
    m = 1 << max(0, (m - 1).bit_length())  # Sobol balance wants powers of two
    ests = []
    for r in range(reps):
        u = qmc.Sobol(env.dim, scramble=True, seed=seed * 1009 + r).random(m)
        vals = env.raw_f(lo + u * (hi - lo))
        vals = vals[np.isfinite(vals)]
        ests.append(vals.mean())
    ests = np.asarray(ests)
    return MeanEstimate(float(ests.mean()) - shift, float(ests.std(ddof=1) / math.sqrt(reps)))


def _grid_values(env):
    """Sorted raw rewards on a midpoint grid of about 10^6 points (cached)."""
    if "grid" not in env._cache:
        per_axis = max(2, round(GRID_POINTS ** (1.0 / env.dim)))
        axis = (np.arange(per_axis) + 0.5) / per_axis
        mesh = np.stack(np.meshgrid(*([axis] * env.dim), indexing="ij"), axis=-1).reshape(-1, env.dim)
        vals = env.raw_f(mesh)
        env._cache["grid"] = np.sort(vals[np.isfinite(vals)])
    return env._cache["grid"]


def level_set_measure(env: EnvironmentSpec, z: float, raw: bool = False) -> float:
    """``G(z) = mu({f > z})``; exact when available, else a dense-grid estimate."""
    zr = z if raw else z + env.mean_shift
    if env.analytic_level_measure is not None:
        return float(env.analytic_level_measure(zr))
    vals = _grid_values(env)
    return float(len(vals) - np.searchsorted(vals, zr, side="right")) / len(vals)


def level_set_stderr(env: EnvironmentSpec, z: float, raw: bool = False) -> float:
    if env.analytic_level_measure is not None:
        return 0.0
    g = level_set_measure(env, z, raw)
    return math.sqrt(max(g * (1 - g), 1e-12) / len(_grid_values(env)))


# -- built-ins ---------------------------------------------------------------

def _log_env(name, scale, dim):
    """``raw_f(x) = scale * ln(1/x_1)``, singular on the face x_1 = 0."""

    def raw_f(x):
        with np.errstate(divide="ignore"):
            return -scale * np.log(x[:, 0])

    def antideriv(x):
        # integral of ln(1/t) from 0 to x
        return x - x * math.log(x) if x > 0 else 0.0

    def mean(lo, hi):
        a, b = float(lo[0]), float(hi[0])
        return scale * (antideriv(b) - antideriv(a)) / (b - a)

    def level(z):
        return min(1.0, math.exp(-z / scale))

    return EnvironmentSpec(name, dim, raw_f, mean_shift=scale,
                           analytic_cube_mean=mean, analytic_level_measure=level)


def himmelblau(u, v):
    return (u**2 + v - 11) ** 2 + (u + v**2 - 7) ** 2


def styblinski_tang(u, v):
    return 0.5 * ((u**4 - 16 * u**2 + 5 * u) + (v**4 - 16 * v**2 + 5 * v))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _box_mean_2d(g, lo, hi):
    """Exact mean of a bivariate polynomial of degree <= 7 per axis over a box."""
    xs = lo[0] + (hi[0] - lo[0]) * (_GL_NODES + 1) / 2
    ys = lo[1] + (hi[1] - lo[1]) * (_GL_NODES + 1) / 2
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.outer(_GL_WEIGHTS, _GL_WEIGHTS) / 4
    return float((W * g(X, Y)).sum())


def _benchmark_env(name, g, lo_native=-5.0, hi_native=5.0):
    """Minimisation benchmark on [lo, hi]^2 turned into a reward in [0, 10] on [0,1)^2."""
    span = hi_native - lo_native

    def native(x, y):
        return g(lo_native + span * x, lo_native + span * y)

    axis = np.linspace(0.0, 1.0, EXTREMA_GRID)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    vals = native(X, Y)
    g_max = float(vals.max())
    # polish the grid minimum so the rescaled reward never exceeds 10
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    res = optimize.minimize(lambda p: native(p[0], p[1]), [axis[i], axis[j]],
                            method="L-BFGS-B", bounds=[(0, 1), (0, 1)], options={"ftol": 1e-15, "gtol": 1e-12})
    g_min = min(float(vals.min()), float(res.fun))
    scale = 10.0 / (g_max - g_min)

    def reward(x, y):
        return scale * (g_max - native(x, y))

    def raw_f(p):
        return reward(p[:, 0], p[:, 1])

    def mean(lo, hi):
        return _box_mean_2d(reward, lo, hi)

    shift = mean(np.zeros(2), np.ones(2))
    return EnvironmentSpec(name, 2, raw_f, mean_shift=shift, analytic_cube_mean=mean, finite_max=10.0)


def _constant_env(dim, value=0.0):
    def raw_f(x):
        return np.full(len(x), float(value))

    def level(z):
        return 1.0 if z < value else 0.0

    return EnvironmentSpec("constant", dim, raw_f, mean_shift=float(value),
                           analytic_cube_mean=lambda lo, hi: float(value),
                           analytic_level_measure=level, finite_max=float(value))


BUILTINS = ("log1d", "log2x", "himmelblau", "styblinski", "constant")


def builtin(name: str, noise_bound: float = 0.0, dim: Optional[int] = None, value: float = 0.0) -> EnvironmentSpec:
    """Construct a named environment.

    ``dim`` applies to the log and constant families (the log rewards
    depend on the first coordinate only); ``value`` to ``constant``.
    """
    if name == "log1d":
        env = _log_env(name, 1.0, dim or 1)
    elif name == "log2x":
        env = _log_env(name, 2.0, dim or 1)
    elif name == "himmelblau":
        _fixed_dim(name, dim)
        env = _cached_benchmark(name)
    elif name == "styblinski":
        _fixed_dim(name, dim)
        env = _cached_benchmark(name)
    elif name == "constant":
        env = _constant_env(dim or 1, value)
    else:
        raise ValueError(f"unknown environment {name!r}; choose from {', '.join(BUILTINS)}")
    return env.with_noise(noise_bound)


def _fixed_dim(name, dim):
    if dim not in (None, 2):
        raise ValueError(f"{name} is defined on [0,1)^2 only")


_BENCH = {}


def _cached_benchmark(name):
    if name not in _BENCH:
        g = himmelblau if name == "himmelblau" else styblinski_tang
        _BENCH[name] = _benchmark_env(name, g)
    env = _BENCH[name]
    return replace(env, _cache=env._cache)
