"""Experiment runner: configuration, seeded replications, baselines and CSV output.

A run directory holds, per replication, the trace (``trace_seed<s>.csv``
plus its partition snapshot) and one ledger per δ
(``ledger_seed<s>_delta<δ>.csv``); across replications an aggregate per
δ (``aggregate_delta<δ>.csv``) and a checker report (``report.csv``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import bandit_p, bandit_z
from .bandit_p import PartitionState
from .cube_stats import AlgoConfig, IndexParams
from .dyadic import DyadicCube, root
from .envs import BUILTINS, builtin, pull
from .oracle import (CheckResult, MeanCache, NonAdmissibleDelta, f_delta, partition_check,
                     playcount_check, point_scattering_check, regret_ledger)
from .trace import HEADER_PREFIX, RunTrace, TraceRow, write_trace

log = logging.getLogger(__name__)

ALGOS = ("p", "z", "random-uniform", "grid-ucb")
DEFAULT_T = {"p": 10000, "z": 2500, "random-uniform": 10000, "grid-ucb": 10000}
REPORT_COLUMNS = ["checker", "status", "estimate", "bound", "margin"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    algo: str
    env: str
    T: int
    eps: float = 0.01
    eta: float = 0.001
    alpha: float = 1.0
    deltas: tuple = (0.01,)
    noise_bound: float = 0.1
    seed: int = 0
    replications: int = 1
    out: str = "runs"
    jobs: int = 1
    dim: Optional[int] = None
    value: float = 0.0
    psi: Optional[float] = None

    def algo_config(self) -> AlgoConfig:
        return AlgoConfig(self.T, self.eps, self.eta, self.noise_bound, self.alpha, self.psi)

    def make_env(self):
        return builtin(self.env, noise_bound=self.noise_bound, dim=self.dim, value=self.value)

    def provenance(self) -> dict:
        d = asdict(self)
        d["deltas"] = list(self.deltas)
        d.pop("out")
        d.pop("jobs")
        return d


# -- config parsing ------------------------------------------------------------

_KEYS = {  # config-file key -> (flag, type)
    "algo": ("--algo", str), "env": ("--env", str), "dim": ("--dim", int), "value": ("--value", float),
    "T": ("--T", int), "eps": ("--eps", float), "eta": ("--eta", float), "alpha": ("--alpha", float),
    "delta": ("--delta", float), "noise_bound": ("--noise-bound", float), "seed": ("--seed", int),
    "replications": ("--replications", int), "out": ("--out", str), "jobs": ("--jobs", int),
    "psi": ("--psi", float),
}


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with flat keys; flags override it")
    for key, (flag, typ) in _KEYS.items():
        if key == "delta":
            parser.add_argument(flag, type=typ, nargs="+", dest=key, help="one or more delta values")
        else:
            parser.add_argument(flag, type=typ, dest=key)


def _where(source, text, key):
    if text is None:
        return f"flag {_KEYS[key][0]}"
    for lineno, line in enumerate(text.splitlines(), start=1):
        if re.search(rf'"{re.escape(key)}"\s*:', line):
            return f"{source}:{lineno}: key {key!r}"
    return f"{source}: key {key!r}"


def parse_config(argv, file=None) -> RunConfig:
    """Build a RunConfig from CLI flags layered over an optional JSON file."""
    parser = argparse.ArgumentParser(prog="bmo run", exit_on_error=False)
    add_run_arguments(parser)
    try:
        ns, extra = parser.parse_known_args(argv)
    except argparse.ArgumentError as exc:
        raise ConfigError(str(exc)) from exc
    if extra:
        raise ConfigError(f"unknown flag {extra[0]!r}")
    file = file or ns.config
    values, origin, text = {}, {}, None
    if file:
        text = Path(file).read_text(encoding="utf-8")
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{file}:1: top level must be a JSON object")
        for key, v in loaded.items():
            if key not in _KEYS:
                raise ConfigError(f"{_where(file, text, key)}: unknown key")
            values[key] = v
            origin[key] = _where(file, text, key)
    for key in _KEYS:
        v = getattr(ns, key)
        if v is not None:
            values[key] = v
            origin[key] = f"flag {_KEYS[key][0]}"

    def get(key, default=None):
        if key not in values:
            return default
        v = values[key]
        typ = _KEYS[key][1]
        try:
            if key == "delta":
                return tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v]))
            if typ is int and isinstance(v, float) and not v.is_integer():
                raise ValueError
            return None if v is None else typ(v)
        except (TypeError, ValueError):
            raise ConfigError(f"{origin[key]}: expected {typ.__name__}, got {v!r}") from None

    def bad(key, msg):
        return ConfigError(f"{origin.get(key, 'flag ' + _KEYS[key][0])}: {msg}")

    env = get("env")
    if env is None:
        raise ConfigError("missing required --env (one of: " + ", ".join(BUILTINS) + ")")
    if env not in BUILTINS:
        raise bad("env", f"unknown environment {env!r}; choose from {', '.join(BUILTINS)}")
    algo = get("algo", "p")
    if algo not in ALGOS:
        raise bad("algo", f"unknown algorithm {algo!r}; choose from {', '.join(ALGOS)}")
    cfg = RunConfig(
        algo=algo, env=env, T=get("T", DEFAULT_T[algo]), eps=get("eps", 0.01), eta=get("eta", 0.001),
        alpha=get("alpha", 1.0), deltas=get("delta", (0.01,)), noise_bound=get("noise_bound", 0.1),
        seed=get("seed", 0), replications=get("replications", 1),
        out=get("out", f"runs/{algo}-{env}"), jobs=get("jobs", 1), dim=get("dim"),
        value=get("value", 0.0), psi=get("psi"),
    )
    if cfg.T < 0:
        raise bad("T", f"T must be >= 0, got {cfg.T}")
    for key in ("eps", "eta"):
        v = getattr(cfg, key)
        if not 0.0 < v < 1.0:
            raise bad(key, f"{key} must lie in (0, 1), got {v}")
    for d in cfg.deltas:
        if not 0.0 < d < 1.0:
            raise bad("delta", f"delta must lie in (0, 1), got {d}")
    if cfg.noise_bound < 0:
        raise bad("noise_bound", "noise bound must be >= 0")
    if cfg.replications < 1:
        raise bad("replications", "replications must be >= 1")
    if cfg.jobs < 1:
        raise bad("jobs", "jobs must be >= 1")
    try:
        dim = cfg.make_env().dim
    except ValueError as exc:
        raise bad("dim", str(exc)) from None
    if cfg.algo == "z" and cfg.T > 0:
        params = IndexParams(cfg.T, cfg.eps, cfg.eta, cfg.noise_bound, dim, cfg.psi)
        hi = bandit_z.max_alpha(params)
        if not 0.0 < cfg.alpha <= hi:
            raise bad("alpha", f"alpha={cfg.alpha} outside the admissible range "
                               f"(0, (psi + D_E) sqrt(2 ln(2T^2/eps)) / ln(M_d/eta)] = (0, {hi:.6g}]")
    return cfg


# -- baselines -----------------------------------------------------------------

def grid_depth(eta: float, dim: int) -> int:
    """Depth whose cell measure 2^(-dim k) is closest to eta on a log scale."""
    return max(0, round(math.log2(1.0 / eta) / dim))


def baseline_random(config: AlgoConfig, env, seed: int) -> RunTrace:
    """Uniform arms over [0,1)^d; each row's cube is the fixed-grid cell holding the arm."""
    rng = np.random.default_rng(seed)
    k = grid_depth(config.eta, env.dim)
    whole = root(env.dim)
    n_cells = 1 << (env.dim * k)
    mu = math.ldexp(1.0, -env.dim * k)
    counts, sums = {}, {}
    trace = RunTrace("random-uniform", env.dim, meta=_meta(config, env, seed))
    for t in range(1, config.T + 1):
        a, y = pull(env, whole, rng)
        cell = DyadicCube(k, tuple(int(math.floor(math.ldexp(x, k))) for x in a))
        trace.rows.append(TraceRow(t, cell, (tuple(a.tolist()),), (y,), counts.get(cell, 0), n_cells, mu))
        counts[cell] = counts.get(cell, 0) + 1
        sums[cell] = sums.get(cell, 0.0) + y
    trace.partition = [(c, counts.get(c, 0), sums.get(c, 0.0)) for c in _grid_cells(env.dim, k)]
    return trace


def _grid_cells(dim, k):
    side = 1 << k
    idx = np.stack(np.meshgrid(*([np.arange(side)] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return [DyadicCube(k, tuple(int(m) for m in row)) for row in idx]


def baseline_grid_ucb(config: AlgoConfig, env, seed: int) -> RunTrace:
    """The same UCB index over a fixed grid with cell measure near eta (no refinement)."""
    rng = np.random.default_rng(seed)
    trace = RunTrace("grid-ucb", env.dim, meta=_meta(config, env, seed))
    if config.T == 0:
        trace.partition = [(root(env.dim), 0, 0.0)]
        return trace
    state = PartitionState(config.index_params(env.dim))
    k = grid_depth(config.eta, env.dim)
    frontier = [0]
    for _ in range(k):
        frontier = [c for i in frontier for c in state.tree.split(i)]
    leaves = state.leaves
    mu = math.ldexp(1.0, -env.dim * k)
    for t in range(1, config.T + 1):
        i = bandit_p.select_node(state)
        cube = state.tree.cubes[i]
        count = int(state.tree.count[i])
        a, y = pull(env, cube, rng)
        state.tree.record(a, y)
        trace.rows.append(TraceRow(t, cube, (tuple(a.tolist()),), (y,), count, len(leaves), mu))
    tree = state.tree
    trace.partition = [(tree.cubes[i], int(tree.count[i]), float(tree.reward_sum[i])) for i in leaves]
    trace.tree = tree
    return trace


def _meta(config, env, seed):
    return {"env": env.name, "T": config.T, "eps": config.eps, "eta": config.eta,
            "noise_bound": config.noise_bound, "alpha": None, "psi": config.psi, "seed": seed}


RUNNERS = {"p": bandit_p.run, "z": bandit_z.run, "random-uniform": baseline_random, "grid-ucb": baseline_grid_ucb}


# -- experiment ----------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_table(path, header, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(HEADER_PREFIX + json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _delta_tag(delta):
    return f"{delta:g}"


def run_replication(config: RunConfig, index: int, reports: dict) -> dict:
    """One seeded run: trace file, one ledger per delta, checker results."""
    seed = config.seed + index
    env = config.make_env()
    trace = RUNNERS[config.algo](config.algo_config(), env, seed)
    out = Path(config.out)
    trace_path = write_trace(trace, out / f"trace_seed{seed}.csv")
    means = MeanCache(env)
    ledgers = {}
    header = dict(config.provenance(), seed=seed)
    for delta, rep in reports.items():
        ledger = regret_ledger(env, rep, trace, means)
        _write_table(out / f"ledger_seed{seed}_delta{_delta_tag(delta)}.csv",
                     dict(header, delta=delta, f_delta=rep.f_delta), ledger.COLUMNS, ledger.table().tolist())
        ledgers[delta] = ledger.table()
    checks = []
    if config.algo == "p":
        checks += [point_scattering_check(trace), partition_check(trace, config.eta)]
    elif config.algo == "z":
        checks.append(playcount_check(trace))
    n_final = len(trace.partition)
    for delta in reports:
        if config.algo in ("p", "z") and delta <= n_final * config.eta:
            log.warning("seed %d: delta=%g does not exceed |Q_T| eta = %g; regret bounds do not apply",
                        seed, delta, n_final * config.eta)
    checks = [CheckResult(f"{c.checker}[seed={seed}]", c.status, c.estimate, c.bound, c.margin, c.detail)
              for c in checks]
    return {"seed": seed, "trace": str(trace_path), "ledgers": ledgers, "checks": checks}


def aggregate(tables) -> np.ndarray:
    """Mean and population sd across replications for each ledger column."""
    stack = np.stack(tables)  # (reps, steps, cols)
    mean = stack.mean(axis=0)
    sd = stack.std(axis=0)
    cols = [mean[:, 0]]
    for j in range(1, 6):
        cols += [mean[:, j], sd[:, j]]
    cols.append(mean[:, 6])
    return np.column_stack(cols)


AGGREGATE_COLUMNS = ["t"] + [f"{c}_{s}" for c in
                             ("cum_delta_regret", "cum_unclamped_gap", "cum_traditional_regret",
                              "n_cubes", "min_cube_measure") for s in ("mean", "sd")] + ["trials"]


def run_experiment(config: RunConfig) -> dict:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    env = config.make_env()
    reports, checks = {}, []
    for delta in config.deltas:
        try:
            reports[delta] = f_delta(env, delta)
            checks.append(CheckResult(f"f_delta[delta={delta:g}]", "pass", reports[delta].f_delta,
                                      reports[delta].g_hi, abs(reports[delta].g_hi - delta)))
        except NonAdmissibleDelta as exc:
            log.warning("%s", exc)
            checks.append(CheckResult(f"f_delta[delta={delta:g}]", "fail", exc.report.f_delta,
                                      exc.report.g_hi, abs(exc.report.g_hi - delta), "not admissible"))
    if config.jobs > 1 and config.replications > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(run_replication, config, i, reports) for i in range(config.replications)]
            results = [f.result() for f in futures]
    else:
        results = [run_replication(config, i, reports) for i in range(config.replications)]
    written = {"traces": [r["trace"] for r in results], "aggregates": []}
    for delta in reports:
        table = aggregate([r["ledgers"][delta] for r in results])
        path = out / f"aggregate_delta{_delta_tag(delta)}.csv"
        _write_table(path, dict(config.provenance(), delta=delta, f_delta=reports[delta].f_delta),
                     AGGREGATE_COLUMNS, table.tolist())
        written["aggregates"].append(str(path))
    for r in results:
        checks.extend(r["checks"])
    report_path = out / "report.csv"
    write_report(checks, report_path)
    written["report"] = str(report_path)
    written["checks"] = checks
    return written


def write_report(checks, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for c in checks:
            w.writerow(c.row())


def read_table(path) -> tuple:
    """(header dict, column names, float array) of a ledger or aggregate CSV."""
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline()[len(HEADER_PREFIX):])
        reader = csv.reader(fh)
        columns = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return header, columns, data
