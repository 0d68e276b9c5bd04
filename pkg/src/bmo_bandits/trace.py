"""Run traces: one row per step (or episode) plus the final cube snapshot.

On disk a trace is a CSV with one line per arm pull, preceded by a
``# bmo {json}`` provenance line, and a sibling ``*_partition.csv`` with
the terminal cubes.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dyadic import DyadicCube

HEADER_PREFIX = "# bmo "


@dataclass(frozen=True)
class TraceRow:
    t: int
    cube: DyadicCube  # selected cube (P, baselines) or parent cube (Z)
    arms: tuple  # one arm per pull; each a tuple of floats
    ys: tuple
    count: int  # n_t of the selected cube before this row's pulls
    n_cubes: int
    min_measure: float
    phase: str = "play"


@dataclass
class RunTrace:
    algo: str
    dim: int
    rows: list = field(default_factory=list)
    partition: list = field(default_factory=list)  # (cube, count, reward_sum) of terminal cubes
    meta: dict = field(default_factory=dict)
    tree: Optional[object] = field(default=None, repr=False, compare=False)

    @property
    def play_rows(self):
        return [r for r in self.rows if r.phase == "play"]

    @property
    def n_warmup(self) -> int:
        return sum(1 for r in self.rows if r.phase == "warmup")


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_columns(dim):
    return ["t", "phase", "cube", "j", "count", "n_cubes", "min_cube_measure", "y"] + [f"a{i}" for i in range(dim)]


def partition_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_partition.csv")


def write_trace(trace: RunTrace, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(trace.meta, algo=trace.algo, dim=trace.dim)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(HEADER_PREFIX + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_columns(trace.dim))
        for r in trace.rows:
            for j, (a, y) in enumerate(zip(r.arms, r.ys)):
                w.writerow([r.t, r.phase, str(r.cube), j, r.count, r.n_cubes, _fmt(r.min_measure), _fmt(y)]
                           + [_fmt(x) for x in a])
    with open(partition_path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cube", "count", "reward_sum"])
        for cube, count, s in trace.partition:
            w.writerow([str(cube), count, _fmt(s)])
    return path


def read_meta(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith(HEADER_PREFIX):
        raise ValueError(f"{path}: missing '{HEADER_PREFIX.strip()}' provenance line")
    return json.loads(first[len(HEADER_PREFIX):])


def read_trace(path) -> RunTrace:
    """Inverse of ``write_trace``; pulls sharing (t, phase) are regrouped into one row."""
    path = Path(path)
    meta = read_meta(path)
    dim = int(meta["dim"])
    rows = []
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        reader = csv.DictReader(fh)
        if reader.fieldnames != trace_columns(dim):
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        pending = None
        for lineno, rec in enumerate(reader, start=3):
            try:
                key = (int(rec["t"]), rec["phase"])
                arm = tuple(float(rec[f"a{i}"]) for i in range(dim))
                y = float(rec["y"])
                cube = DyadicCube.parse(rec["cube"])
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if pending is not None and pending[0] == key and rec["phase"] == "play":
                pending[1].append(arm)
                pending[2].append(y)
                continue
            if pending is not None:
                rows.append(_row(*pending))
            pending = (key, [arm], [y], cube, int(rec["count"]), int(rec["n_cubes"]), float(rec["min_cube_measure"]))
        if pending is not None:
            rows.append(_row(*pending))
    partition = []
    ppath = partition_path(path)
    if ppath.exists():
        with open(ppath, encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                partition.append((DyadicCube.parse(rec["cube"]), int(rec["count"]), float(rec["reward_sum"])))
    algo = meta.pop("algo")
    meta.pop("dim")
    return RunTrace(algo, dim, rows, partition, meta)


def _row(key, arms, ys, cube, count, n_cubes, min_measure):
    t, phase = key
    return TraceRow(t, cube, tuple(arms), tuple(ys), count, n_cubes, min_measure, phase)
