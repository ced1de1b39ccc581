"""Compare the compiled and NumPy backends of the lazy Khatri-Rao operator.

    python3 benchmarks/bench_khatri.py [--repeat 5] [--threads 1]

Prints one row per layout: median seconds per application for each
backend, the speedup, and the max abs difference between their outputs.
"""

import argparse
import statistics
import time

import numpy as np
from threadpoolctl import threadpool_limits

from trek import BlockLayout, GaussianKernel, LazyKhatriOperator, gram

LAYOUTS = [(100, 5), (100, 20), (20, 100), (50, 50), (10, 200)]


def _time(op, v, out, repeat):
    op.apply_into(v, out)
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        op.apply_into(v, out)
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'n':>5} {'r':>5} {'R':>6} {'cython s':>10} {'python s':>10} {'speedup':>8} {'max diff':>9}")
    with threadpool_limits(limits=args.threads):
        for n, r in LAYOUTS:
            lay = BlockLayout.uniform(n, r)
            locs = [np.sort(rng.uniform(0, 1, r)) for _ in range(n)]
            G = gram(GaussianKernel(200.0), lay, locs)
            v = rng.standard_normal(lay.R_odot)
            outs, times = {}, {}
            for backend in ("cython", "python"):
                op = LazyKhatriOperator(G, 0.05, backend=backend)
                outs[backend] = np.empty_like(v)
                times[backend] = _time(op, v, outs[backend], args.repeat)
            diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
            print(f"{n:>5} {r:>5} {lay.R:>6} {times['cython']:>10.4f} {times['python']:>10.4f} "
                  f"{times['python'] / times['cython']:>8.2f} {diff:>9.1e}")


if __name__ == "__main__":
    main()
