"""Compare the compiled K-NN kernel against the pure-NumPy fallback.

Run: python benchmarks/bench_knn.py [--sizes 2000,8000,32000] [--k 16]
Both backends search the identical tree and return identical results; this
measures the traversal cost gap on the workloads the trainer actually
issues (self-queries for encoder neighborhoods, sparse queries for the
head).
"""

import argparse
import time

import numpy as np

from sqn.neighbors import ACTIVE_BACKEND, SpatialIndex


def bench(points, queries, k, backend, repeat=3):
    best = float("inf")
    index = SpatialIndex(points, backend=backend)
    for _ in range(repeat):
        t0 = time.perf_counter()
        index.knn_batch(queries, k)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="2000,8000,32000")
    parser.add_argument("--k", type=int, default=16)
    parser.add_argument("--queries", type=int, default=0,
                        help="query count (default: self-query all points)")
    args = parser.parse_args()

    backends = ["pure"] + (["compiled"] if ACTIVE_BACKEND == "compiled" else [])
    if ACTIVE_BACKEND != "compiled":
        print("note: compiled kernel unavailable, benchmarking pure only")
    rng = np.random.default_rng(0)
    print(f"{'N':>8} {'Q':>8} {'k':>4} " + " ".join(f"{b:>12}" for b in backends)
          + ("  speedup" if len(backends) == 2 else ""))
    for size in (int(s) for s in args.sizes.split(",")):
        pts = rng.uniform(0, 10, (size, 3)).astype(np.float32)
        queries = pts if args.queries == 0 else rng.uniform(0, 10, (args.queries, 3)).astype(np.float32)
        times = [bench(pts, queries, args.k, b) for b in backends]
        row = f"{size:>8} {len(queries):>8} {args.k:>4} " + " ".join(
            f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:>6.1f}x"
        print(row)

    # correctness cross-check on a small instance
    if len(backends) == 2:
        pts = rng.uniform(0, 1, (3000, 3)).astype(np.float32)
        q = rng.uniform(0, 1, (500, 3)).astype(np.float32)
        ic, ip = SpatialIndex(pts, backend="compiled"), SpatialIndex(pts, backend="pure")
        ci, cd = ic.knn_batch(q, args.k)
        pi, pd = ip.knn_batch(q, args.k)
        assert np.array_equal(ci, pi) and np.array_equal(cd, pd)
        print("backends agree bit-for-bit on 500 random queries")


if __name__ == "__main__":
    main()
