"""Time the compiled kernels against the pure Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from torusdisc import _backend
from torusdisc import linear_rates as lr
from torusdisc.torus_maps import builtin


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(quick):
    N = 256 if quick else 1024
    prog = builtin("g1").compile()
    table = np.random.default_rng(0).integers(0, N * N, N * N).astype(np.int64)
    seq = lr.random_sl_sequence(2, 3, 5.0, 1)
    pts = lr.ball_points(40 if quick else 120, 2)
    samples = 20000 if quick else 100000

    def mc(kern):
        return lambda: lr.mean_rate_mc(seq, samples, 0, backend=kern.NAME)

    return [
        (f"materialize g1, N={N}", lambda k: lambda: k.MapKernel(prog).materialize(N)),
        ("floyd f2, N=4098", lambda k: lambda: k.MapKernel(builtin("f2").compile()).floyd(
            2049 * 4098 + 2049, 4098, 10**9)),
        (f"label_graph, {N * N} nodes", lambda k: lambda: k.label_graph(table)),
        (f"rate_members, {len(pts)} targets, k=3",
         lambda k: lambda: lr.image_membership(seq, pts, backend=k.NAME)),
        (f"mc_cover, {samples} samples, k=3", mc),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = _backend.available()
    print(f"{'kernel':42s}" + "".join(f"{n:>12s}" for n in names) + "     speedup")
    for label, make in cases(args.quick):
        times = [best_of(make(_backend.get(n)), args.repeat) for n in names]
        speed = f"{times[1] / times[0]:10.1f}x" if len(times) == 2 else ""
        print(f"{label:42s}" + "".join(f"{t:11.4f}s" for t in times) + speed)


if __name__ == "__main__":
    main()
