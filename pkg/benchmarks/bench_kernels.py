"""Time the numpy and numba collision/distance kernels on planner-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--dim 4]
"""
import argparse
import timeit

import numpy as np

from litstar.kernels import IMPLEMENTATIONS
from litstar.space import make_random_rectangles


def workloads(dim, rng):
    env = make_random_rectangles(dim, count=10)
    lo, hi = env.bounds.lo, env.bounds.hi
    olo = np.array([o.lo for o in env.obstacles])
    ohi = np.array([o.hi for o in env.obstacles])
    pts = rng.random((5000, dim))
    a, b = rng.random(dim), rng.random(dim)
    invalid = rng.random(5000) < 0.2
    centers = rng.random((50, dim))
    return {
        "points_valid": (pts[:100], lo, hi, olo, ohi),
        "segment_check": (a, b, lo, hi, olo, ohi, 0.005),
        "sq_distances": (pts, a),
        "ball_counts": (pts, invalid, centers, 0.2),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--dim", type=int, default=4)
    args = ap.parse_args(argv)
    args_by_kernel = workloads(args.dim, np.random.default_rng(0))
    backends = sorted(IMPLEMENTATIONS)
    print(f"{'kernel':15s}" + "".join(f"{b:>14s}" for b in backends) + "   speedup")
    for name, kargs in args_by_kernel.items():
        times = {}
        for b in backends:
            fn = IMPLEMENTATIONS[b][name]
            fn(*kargs)                                   # warm-up / JIT compile
            times[b] = min(timeit.repeat(lambda: fn(*kargs), number=args.repeat, repeat=3)) / args.repeat
        row = f"{name:15s}" + "".join(f"{times[b] * 1e6:12.2f}us" for b in backends)
        if "numba" in times:
            row += f"   {times['numpy'] / times['numba']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
