"""Compare the compiled and numpy kernel backends.

Times the two hot kernels on synthetic trees of several sizes, then a full
partition run and a full zooming run under each backend, and checks that
both backends produce identical traces.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 1000 10000 100000]
"""
import argparse
import time

import numpy as np

from bmo_bandits import bandit_p, bandit_z, kernels
from bmo_bandits.cube_stats import AlgoConfig, CubeTree, IndexParams
from bmo_bandits.envs import builtin


def synthetic_tree(n_nodes, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    tree = CubeTree(dim, capacity=n_nodes + (1 << dim))
    while tree.n_nodes + (1 << dim) <= n_nodes:
        leaves = tree.leaf_ids()
        tree.split(int(leaves[rng.integers(len(leaves))]))
    live = tree.n_nodes
    tree.count[:live] = rng.integers(0, 50, live)
    tree.reward_sum[:live] = rng.normal(size=live) * tree.count[:live]
    return tree


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kernels(sizes, repeat):
    params = IndexParams(10_000, 0.01, 1e-6, 0.1, 2)
    jn = params.jn_table()
    print(f"{'kernel':<16}{'nodes':>9}" + "".join(f"{b:>12}" for b in kernels.BACKENDS) + f"{'speedup':>10}")
    for n in sizes:
        tree = synthetic_tree(n)
        cand = tree.leaf_ids()
        jobs = {
            "select_best": lambda m: m.select_best(cand, tree.count, tree.reward_sum, tree.depth, tree.coords,
                                                   jn, params.radius_scale),
            "classify_flags": lambda m: m.classify_flags(tree.first_child, tree.parent, tree.depth,
                                                         tree.n_nodes, tree.n_children),
        }
        for name, job in jobs.items():
            t = {b: best_of(lambda: job(m), repeat) for b, m in kernels.BACKENDS.items()}
            speed = t["python"] / t["compiled"] if "compiled" in t else float("nan")
            print(f"{name:<16}{tree.n_nodes:>9}" + "".join(f"{t[b] * 1e6:>10.1f}us" for b in t) + f"{speed:>9.1f}x")


def bench_runs(repeat):
    env = builtin("himmelblau", noise_bound=0.1)
    runs = {
        "P, T=10000": lambda: bandit_p.run(AlgoConfig(T=10_000), env, seed=0),
        "Z, T=2500": lambda: bandit_z.run(AlgoConfig(T=2500), env, seed=0),
        "P, eta=1e-5": lambda: bandit_p.run(AlgoConfig(T=3000, eta=1e-5, psi=40.0, eps=0.5), env, seed=0),
    }
    before = kernels.backend
    print(f"\n{'full run':<16}" + "".join(f"{b:>12}" for b in kernels.BACKENDS) + f"{'speedup':>10}{'same':>6}")
    try:
        for label, job in runs.items():
            t, traces = {}, {}
            for b in kernels.BACKENDS:
                kernels.use_backend(b)
                traces[b] = job().rows
                t[b] = best_of(job, repeat)
            speed = t["python"] / t["compiled"] if "compiled" in t else float("nan")
            same = all(rows == traces["python"] for rows in traces.values())
            print(f"{label:<16}" + "".join(f"{t[b]:>11.3f}s" for b in t) + f"{speed:>9.2f}x{str(same):>6}")
    finally:
        kernels.use_backend(before)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    parser.add_argument("--skip-runs", action="store_true")
    args = parser.parse_args()
    if "compiled" not in kernels.BACKENDS:
        print("compiled backend unavailable; only the numpy fallback is timed")
    bench_kernels(args.sizes, args.repeat)
    if not args.skip_runs:
        bench_runs(max(1, args.repeat // 2))


if __name__ == "__main__":
    main()
