"""δ-regret oracle and empirical checks of the inequalities behind the regret bounds.

Checkers return a ``CheckResult`` carrying the estimate, the bound and the
statistical margin, so a Monte-Carlo miss can be told apart from a logical
violation.  ``status`` is ``"malformed"`` when the input breaks the
checker's precondition.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cube_stats import IndexParams
from .dyadic import DyadicCube, is_partition
from .envs import EnvironmentSpec, _as_box, cube_mean, level_set_measure
from .trace import RunTrace

E = math.e


class NonAdmissibleDelta(ValueError):
    def __init__(self, report):
        super().__init__(
            f"delta={report.delta} is not admissible: level-set measure jumps across it "
            f"near z={report.f_delta:.6g} (G in [{report.g_hi:.6g}, {report.g_lo:.6g}])")
        self.report = report


class QuadratureBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class AdmissibilityReport:
    delta: float
    f_delta: float
    bracket: tuple
    admissible: bool
    g_lo: float  # G at the bracket's lower end (> delta)
    g_hi: float  # G at f_delta (<= delta)
    raw: bool = False


def f_delta(env: EnvironmentSpec, delta: float, tol: float = 1e-10, g_tol: float = 1e-4,
            raw: bool = False, raise_on_failure: bool = True) -> AdmissibilityReport:
    """Smallest z with ``mu({f > z}) = delta``, found by bisection on the level-set measure."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")

    def G(z):
        return level_set_measure(env, z, raw=raw)

    rng = np.random.default_rng(20240607)
    vals = env.raw_f(rng.random((10_000, env.dim)))
    vals = vals[np.isfinite(vals)]
    if not raw:
        vals = vals - env.mean_shift
    q_lo, q_hi = np.quantile(vals, [0.01, 0.999])
    pad = 1.0 + abs(q_lo)
    lo = q_lo - pad
    for _ in range(200):
        if G(lo) > delta:
            break
        pad *= 2
        lo = q_lo - pad
    else:
        raise QuadratureBudgetExceeded("could not bracket f_delta from below")
    step = 1.0 + abs(q_hi - lo)
    hi = max(q_hi, lo + 1.0)
    for _ in range(200):
        if G(hi) <= delta:
            break
        hi += step
        step *= 2
    else:
        raise QuadratureBudgetExceeded("could not bracket f_delta from above")
    for _ in range(400):
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if G(mid) <= delta:
            hi = mid
        else:
            lo = mid
    g_lo, g_hi = G(lo), G(hi)
    report = AdmissibilityReport(delta, hi, (lo, hi), abs(g_hi - delta) <= g_tol, g_lo, g_hi, raw)
    if not report.admissible and raise_on_failure:
        raise NonAdmissibleDelta(report)
    return report


class MeanCache:
    """Memoised centred cube means for one environment."""

    def __init__(self, env: EnvironmentSpec, budget: int = 4096):
        self.env = env
        self.budget = budget
        self._means = {}

    def __call__(self, cube: DyadicCube) -> float:
        m = self._means.get(cube)
        if m is None:
            m = self._means[cube] = cube_mean(self.env, cube, self.budget).value
        return m


def step_gap(env: EnvironmentSpec, report: AdmissibilityReport, cube, means=None) -> float:
    """Unclamped ``f_delta - <f>_cube`` (centred)."""
    if report.raw:
        raise ValueError("regret needs a report on the centred reward (raw=False)")
    mean = means(cube) if means is not None else cube_mean(env, cube).value
    return report.f_delta - mean


def step_regret(env: EnvironmentSpec, report: AdmissibilityReport, cube, means=None) -> float:
    return max(0.0, step_gap(env, report, cube, means))


def episode_regret(env: EnvironmentSpec, report: AdmissibilityReport, parent: DyadicCube, means=None) -> float:
    """``M_d * max(0, f_delta - <f>_parent)`` for one zooming episode."""
    return (1 << parent.dim) * step_regret(env, report, parent, means)


@dataclass
class RegretLedger:
    t: np.ndarray
    trials: np.ndarray
    cube_mean: np.ndarray
    regret: np.ndarray  # clamped delta-regret per row
    gap: np.ndarray  # unclamped, scaled by pulls per row
    traditional: Optional[np.ndarray]
    n_cubes: np.ndarray
    min_measure: np.ndarray
    delta: float = 0.0
    f_delta: float = 0.0

    @property
    def cum_regret(self):
        return np.cumsum(self.regret)

    @property
    def cum_gap(self):
        return np.cumsum(self.gap)

    @property
    def cum_traditional(self):
        return None if self.traditional is None else np.cumsum(self.traditional)

    COLUMNS = ("t", "cum_delta_regret", "cum_unclamped_gap", "cum_traditional_regret",
               "n_cubes", "min_cube_measure", "trials")

    def table(self) -> np.ndarray:
        trad = self.cum_traditional
        if trad is None:
            trad = np.full(len(self.t), np.nan)
        return np.column_stack([self.t, self.cum_regret, self.cum_gap, trad,
                                self.n_cubes, self.min_measure, self.trials])


def regret_ledger(env: EnvironmentSpec, report: AdmissibilityReport, trace: RunTrace, means=None) -> RegretLedger:
    """Per-row δ-regret of the play rows of ``trace`` (warm-up pulls are not charged).

    A row with k pulls in cube Q costs ``k * max(0, f_delta - <f>_Q)``; for a
    zooming episode that is the ``M_d`` multiple of the parent gap.
    """
    means = means or MeanCache(env)
    rows = trace.play_rows
    pulls = np.array([len(r.arms) for r in rows], dtype=float)
    mu = np.array([means(r.cube) for r in rows])
    gap = report.f_delta - mu
    top = env.centred_max
    return RegretLedger(
        t=np.array([r.t for r in rows]),
        trials=np.cumsum(pulls).astype(int),
        cube_mean=mu,
        regret=pulls * np.maximum(0.0, gap),
        gap=pulls * gap,
        traditional=None if top is None else pulls * (top - mu),
        n_cubes=np.array([r.n_cubes for r in rows]),
        min_measure=np.array([r.min_measure for r in rows]),
        delta=report.delta,
        f_delta=report.f_delta,
    )


# -- checkers ----------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    checker: str
    status: str  # "pass", "fail" or "malformed"
    estimate: float = math.nan
    bound: float = math.nan
    margin: float = 0.0
    detail: str = field(default="", compare=False)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def row(self):
        return [self.checker, self.status, repr(float(self.estimate)), repr(float(self.bound)), repr(float(self.margin))]


def _verdict(name, estimate, bound, margin, detail=""):
    status = "pass" if estimate - margin <= bound else "fail"
    return CheckResult(name, status, float(estimate), float(bound), float(margin), detail)


def _sample_box(lo, hi, n, rng):
    return lo + rng.random((n, len(lo))) * (hi - lo)


def jn_check(env: EnvironmentSpec, q, lam: float, n_samples: int, norm_bound: float,
             rng: Optional[np.random.Generator] = None) -> CheckResult:
    """Monte-Carlo test of ``mu({x in q: |f - <f>_q| > lam}) <= e mu(q) exp(-lam / (e 2^d norm))``."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = rng or np.random.default_rng(0)
    lo, hi = _as_box(q)
    vol = float(np.prod(hi - lo))
    mean = cube_mean(env, q, raw=True).value
    vals = env.raw_f(_sample_box(lo, hi, n_samples, rng))
    # non-finite values sit on a null set but count as deviations if drawn
    frac = float(np.mean(~(np.abs(vals - mean) <= lam)))
    c2 = E * 2 ** env.dim
    if norm_bound > 0:
        bound = E * vol * math.exp(-lam / (c2 * norm_bound))
    else:
        bound = E * vol if lam == 0 else 0.0
    margin = vol * (3.0 * math.sqrt(max(frac * (1 - frac), 1.0 / n_samples) / n_samples))
    return _verdict(f"john_nirenberg[lambda={lam:g}]", frac * vol, bound, margin)


def mean_oscillation(env: EnvironmentSpec, lo, hi, n_samples: int, rng) -> float:
    vals = env.raw_f(_sample_box(lo, hi, n_samples, rng))
    vals = vals[np.isfinite(vals)]
    return float(np.mean(np.abs(vals - vals.mean()))) if len(vals) else 0.0


def bmo_norm_estimate(env: EnvironmentSpec, n_rects: int, n_samples: int,
                      rng: Optional[np.random.Generator] = None) -> float:
    """Largest Monte-Carlo mean oscillation over ``n_rects`` random boxes.

    A lower estimate of the BMO norm that can only grow with ``n_rects``.
    Half of the boxes are drawn with log-uniform side lengths so that small
    boxes near singular faces are visited.
    """
    rng = rng or np.random.default_rng(0)
    best = 0.0
    for r in range(n_rects):
        if r % 2 == 0:
            ends = np.sort(rng.random((2, env.dim)), axis=0)
            lo, hi = ends[0], ends[1]
        else:
            side = 10.0 ** -rng.uniform(0, 4, env.dim)
            lo = rng.random(env.dim) * (1 - side)
            lo = np.where(rng.random(env.dim) < 0.25, 0.0, lo)
            hi = lo + side
        if np.any(hi <= lo):
            continue
        best = max(best, mean_oscillation(env, lo, hi, n_samples, rng))
    return best


def nested_mean_drift_check(env: EnvironmentSpec, chain: Sequence, K: float,
                            norm_bound: Optional[float] = None, budget: int = 1 << 14) -> CheckResult:
    """Check ``|<f>_{q_0} - <f>_{q_k}| <= K k ||f||`` along an increasing chain of boxes."""
    if K < 1:
        raise ValueError("K must be >= 1")
    boxes = [_as_box(q) for q in chain]
    for (lo0, hi0), (lo1, hi1) in zip(boxes, boxes[1:]):
        if np.any(lo1 > lo0) or np.any(hi1 < hi0):
            raise ValueError("chain is not nested")
        if np.prod(hi1 - lo1) > K * np.prod(hi0 - lo0) * (1 + 1e-12):
            raise ValueError("chain grows by more than a factor K in one step")
    k = len(chain) - 1
    if k == 0:
        return _verdict("nested_mean_drift[k=0]", 0.0, 0.0, 0.0)
    if norm_bound is None:
        norm_bound = bmo_norm_estimate(env, 200, 4000)
    first = cube_mean(env, chain[0], budget)
    last = cube_mean(env, chain[-1], budget)
    drift = abs(first.value - last.value)
    return _verdict(f"nested_mean_drift[k={k}]", drift, K * k * norm_bound, 3 * (first.stderr + last.stderr))


def _nesting_problem(trace: RunTrace) -> str:
    leaves = [c for c, _, _ in trace.partition]
    if not leaves or not is_partition(leaves):
        return "terminal snapshot is not a partition"
    leaf_set = set(leaves)
    strict_ancestors = set()
    for r in trace.play_rows:
        q = r.cube
        if q in strict_ancestors:
            return f"step {r.t}: cube {q} is coarser than an earlier selection"
        for k in range(q.depth):
            a = q.ancestor(k)
            if a in leaf_set:
                return f"step {r.t}: cube {q} is finer than the final partition"
            strict_ancestors.add(a)
    return ""


def point_scattering_check(trace: RunTrace) -> CheckResult:
    """``sum_t 1/max(1, n_t(Q_t)) <= e |Q_T| ln(1 + (e-1) T / |Q_T|)`` on a partition run."""
    name = "point_scattering"
    problem = _nesting_problem(trace)
    if problem:
        return CheckResult(name, "malformed", detail=problem)
    rows = trace.play_rows
    T = len(rows)
    n_cubes = len(trace.partition)
    lhs = math.fsum(1.0 / max(1, r.count) for r in rows)
    rhs = E * n_cubes * math.log(1 + (E - 1) * T / n_cubes)
    return _verdict(name, lhs, rhs, 0.0)


def partition_check(trace: RunTrace, eta: Optional[float] = None) -> CheckResult:
    """Terminal partition of a P run: tiles the space, every cube at least eta, at most 1/eta cubes."""
    name = "partition"
    eta = eta if eta is not None else trace.meta.get("eta")
    leaves = [c for c, _, _ in trace.partition]
    if not leaves or not is_partition(leaves):
        return CheckResult(name, "fail", detail="terminal cubes do not tile [0,1)^d")
    smallest = min(c.measure for c in leaves)
    ok = smallest >= eta and len(leaves) <= 1.0 / eta
    return CheckResult(name, "pass" if ok else "fail", smallest, eta, 0.0, f"{len(leaves)} cubes")


def playcount_bound(params: IndexParams, alpha: float, mu: float) -> int:
    return math.ceil((params.radius_scale / (alpha * math.log(mu / params.eta))) ** 2) + 1


def playcount_check(trace: RunTrace, params: Optional[IndexParams] = None,
                    alpha: Optional[float] = None) -> CheckResult:
    """Each parent of measure above ``M_d eta`` is selected in at most ceil((C / (alpha ln(mu/eta)))^2) + 1 episodes."""
    name = "play_count"
    if trace.algo != "z":
        return CheckResult(name, "malformed", detail=f"expected a zooming trace, got algo={trace.algo!r}")
    meta = trace.meta
    if params is None:
        params = IndexParams(int(meta["T"]), meta["eps"], meta["eta"], meta["noise_bound"], trace.dim, meta.get("psi"))
    alpha = alpha if alpha is not None else meta["alpha"]
    counts = Counter(r.cube for r in trace.play_rows)
    worst = (0.0, 1.0, -math.inf)  # (count, bound, count - bound)
    for cube, n in counts.items():
        mu = cube.measure
        if mu <= params.doubling * params.eta:
            continue
        b = playcount_bound(params, alpha, mu)
        if n - b > worst[2]:
            worst = (n, b, n - b)
    return _verdict(name, worst[0], worst[1], 0.0)
