"""Timing comparison of the compiled distance/weighting kernels against the
pure-numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--sizes 500,1000,2000] [--dim 10]

Both backends are imported directly (no environment juggling), timed on the
same arrays, and cross-checked for agreement before any number is printed.
"""

import argparse
import time

import numpy as np

from closedobs import _kernels, _pykernels

try:
    from closedobs import _ckernels
except ImportError:
    _ckernels = None


def _time(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(n, dim, k, rng):
    pts = rng.normal(size=(n, dim))
    queries = rng.normal(size=(max(64, n // 4), dim))
    values = rng.normal(size=(n, 2))

    rows = []
    cases = [
        ("pairwise", (pts,), _pykernels.pairwise_distances,
         None if _ckernels is None else _ckernels.pairwise_distances),
        ("cross", (queries, pts), _pykernels.cross_distances,
         None if _ckernels is None else _ckernels.cross_distances),
        ("shepard", (queries, pts, values, k, 2.0, 1e-12),
         _pykernels.shepard_eval,
         None if _ckernels is None else _ckernels.shepard_eval),
    ]
    for name, args, py_fn, c_fn in cases:
        t_py, out_py = _time(py_fn, *args)
        if c_fn is None:
            rows.append((name, n, t_py, None, None))
            continue
        t_c, out_c = _time(c_fn, *args)
        if name == "shepard":
            np.testing.assert_allclose(out_c[0], out_py[0], atol=1e-12)
        else:
            np.testing.assert_allclose(out_c, out_py, atol=1e-12)
        rows.append((name, n, t_py, t_c, t_py / t_c))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="500,1000,2000",
                        help="node counts, comma separated")
    parser.add_argument("--dim", type=int, default=10)
    parser.add_argument("--neighbors", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"active backend: {_kernels.BACKEND}")
    if _ckernels is None:
        print("compiled extension not available; timing the fallback only")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<10} {'n':>6} {'python [ms]':>12} {'cython [ms]':>12} "
          f"{'speedup':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, sz, t_py, t_c, ratio in bench(n, args.dim, args.neighbors,
                                                rng):
            c_ms = "-" if t_c is None else f"{1e3 * t_c:12.2f}"
            r = "-" if ratio is None else f"{ratio:8.1f}"
            print(f"{name:<10} {sz:>6} {1e3 * t_py:12.2f} {c_ms:>12} {r:>8}")


if __name__ == "__main__":
    main()
