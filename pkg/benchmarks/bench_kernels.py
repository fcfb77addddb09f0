"""Wall-clock comparison of the compiled and pure-Python kernels.

Run ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on the
same inputs and seed in both backends and the outputs are checked for
equality.
"""
import argparse
import time

import numpy as np

from rilab import kernels
from rilab.interlacements import InterlacementSampler
from rilab.lattice import Window
from rilab.potential import green_table


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a), np.asarray(b))


def cases(scale):
    d, R = 3, 20
    side = 2 * R + 1
    kmask = np.zeros(side ** d, dtype=np.uint8)
    kmask[np.ravel_multi_index((R, R, R), (side,) * d)] = 1
    start = np.zeros(d, dtype=np.int64)
    yield "escape_walks", lambda k: k.escape_walks(d, R, start, kmask, 200 * scale,
                                                   np.random.PCG64(1))
    yield "return_counts", lambda k: k.return_counts(d, R, 200 * scale, np.random.PCG64(2))

    W = Window.centered(3, 3)
    s = InterlacementSampler(W, green_table(3, 7))
    rng = np.random.default_rng(3)
    counts, _, entries, offsets = s._draw_counts(rng, 1.0, 20 * scale)
    yield "trace_chain", lambda k: k.trace_chain(s._nbr, s._bsites, s._ret_cdf, entries, offsets,
                                                 np.random.PCG64(4), False)[:3]

    grid = (np.random.default_rng(5).random((60, 60, 60)) < 0.3).astype(np.uint8).ravel()
    shape = np.array([60, 60, 60], dtype=np.int64)
    back = -np.eye(3, dtype=np.int64)
    yield "label_components", lambda k: k.label_components(grid, shape, back)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scale", type=int, default=1, help="workload multiplier")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    fast, slow = kernels.backend("cython"), kernels.backend("python")
    print(f"{'kernel':<18}{'cython [s]':>12}{'python [s]':>12}{'speedup':>10}  equal")
    for name, run in cases(args.scale):
        tc, oc = _time(lambda: run(fast), args.repeat)
        tp, op = _time(lambda: run(slow), 1)
        print(f"{name:<18}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}  {_same(oc, op)}")


if __name__ == "__main__":
    main()
