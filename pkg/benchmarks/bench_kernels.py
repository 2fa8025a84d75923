"""Time the compiled and pure-Python kernels on a tomography-sized problem.

Usage::

    python benchmarks/bench_kernels.py [--n 64] [--repeat 3]
"""
import argparse
import time

import numpy as np

from rowprox import kernels
from rowprox.sparsela import row_sqnorms
from rowprox.tomo import Geometry, build_projector


def _best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=64, help="image side N")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    g = Geometry(args.n, max(args.n, 8), int(round(1.5 * args.n)))
    A = build_projector(g)
    b = A @ np.ones(A.ncols)
    sq = row_sqnorms(A)
    order = np.arange(A.nrows, dtype=np.int64)
    lo, hi = np.zeros(A.ncols), np.full(A.ncols, np.inf)
    rays = tuple(np.ascontiguousarray(v) for v in g.rays())

    backends = ["python"]
    try:
        kernels.get_backend("cython")
        backends.append("cython")
    except ImportError:
        print("compiled extension not available; timing the Python kernels only")

    print(f"matrix {A.nrows} x {A.ncols}, nnz {A.nnz}")
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name in backends) + ("   speedup" if len(backends) == 2 else ""))
    results = {}
    for label, make in (
        ("row_sweep (damped)", lambda mod: lambda: mod.row_sweep(
            A.row_offsets, A.col_indices, A.values, sq, b, np.zeros(A.ncols), order,
            kernels.DAMPED, 1.0, 1.0, 0.0, lo, hi, 1)),
        ("trace_rays", lambda mod: lambda: mod.trace_rays(*rays, g.N, g.length_scale)),
    ):
        times = [_best_of(make(kernels.get_backend(name)), args.repeat) for name in backends]
        results[label] = times
        line = f"{label:<22}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            line += f"   {times[0] / times[1]:>6.1f}x"
        print(line)
    return results


if __name__ == "__main__":
    main()
