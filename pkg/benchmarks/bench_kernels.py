"""Compiled vs pure-Python kernels on the same segment index workload.

    python3 benchmarks/bench_kernels.py [--objects 40] [--avg-len 400] [--queries 200]

Both backends index the same synthetic trajectories and answer the same
queries; results are compared before timings are printed.
"""
import argparse
import sys
import time

import numpy as np

from trajdp import available
from trajdp.index import STRATEGIES, SegmentIndex
from trajdp.synth import generate_dataset


def _run(backend, strategy, dataset, queries, k):
    t0 = time.perf_counter()
    index = SegmentIndex(strategy, dataset[0].grid, backend)
    index.add_dataset(dataset)
    t1 = time.perf_counter()
    out = [index.search(qx, qy, k, trajectories=True) for qx, qy in queries]
    t2 = time.perf_counter()
    return out, t1 - t0, t2 - t1


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--objects", type=int, default=40)
    p.add_argument("--avg-len", type=int, default=400)
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if "compiled" not in available():
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    dataset, _ = generate_dataset(args.objects, args.avg_len, seed=args.seed)
    rng = np.random.default_rng(args.seed)
    queries = [tuple(q) for q in rng.random((args.queries, 2)).tolist()]
    print(f"{sum(len(t) for t in dataset)} points, {args.queries} queries, k={args.k}")
    print(f"{'strategy':<8} {'build py':>9} {'build c':>9} {'query py':>9} {'query c':>9} "
          f"{'speedup':>8}")
    for strategy in STRATEGIES:
        res_py, build_py, query_py = _run("python", strategy, dataset, queries, args.k)
        res_c, build_c, query_c = _run("compiled", strategy, dataset, queries, args.k)
        if res_py != res_c:
            print(f"{strategy}: backends disagree", file=sys.stderr)
            return 2
        speed = (build_py + query_py) / max(build_c + query_c, 1e-9)
        print(f"{strategy:<8} {build_py:>9.3f} {build_c:>9.3f} {query_py:>9.3f} "
              f"{query_c:>9.3f} {speed:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
