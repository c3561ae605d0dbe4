"""Compare the compiled smoothing kernels with the numpy fallback.

Run with ``python benchmarks/bench_smoothing.py [--sites 1000] [--rows 25] [--repeat 5]``.
Both backends are checked for agreement before timing.
"""
import argparse
import sys
import timeit

import numpy as np

from methinter import _kernels_py
from methinter.curves import uniform_grid

try:
    from methinter import _kernels
except ImportError:
    _kernels = None


def make_inputs(sites: int, rows: int, grid_size: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    positions = np.sort(rng.choice(np.arange(270_000), size=sites, replace=False)).astype(np.float64)
    levels = np.ascontiguousarray(rng.random((rows, sites)))
    targets = uniform_grid(grid_size) * (positions[-1] - positions[0]) + positions[0]
    return positions, levels, targets


def run(module, positions, levels, targets, k: int, h_min: float):
    dk = module.kth_nearest_distances(positions, targets, k)
    h = np.ascontiguousarray(np.maximum(dk, h_min))
    return module.nw_smooth_rows(positions, levels, targets, h)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sites", type=int, default=1000)
    ap.add_argument("--rows", type=int, default=25)
    ap.add_argument("--grid-size", type=int, default=1001)
    ap.add_argument("--k", type=int, default=70)
    ap.add_argument("--h-min", type=float, default=1000.0)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    inputs = make_inputs(args.sites, args.rows, args.grid_size)
    backends = {"python": _kernels_py}
    if _kernels is None:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)
    else:
        backends["compiled"] = _kernels
        ref, _ = run(_kernels_py, *inputs, args.k, args.h_min)
        got, _ = run(_kernels, *inputs, args.k, args.h_min)
        print(f"max abs difference between backends: {np.max(np.abs(ref - got)):.3g}")

    times = {}
    for name, module in backends.items():
        t = timeit.repeat(lambda: run(module, *inputs, args.k, args.h_min), number=1, repeat=args.repeat)
        times[name] = min(t)
        print(f"{name:>8}: {times[name] * 1e3:9.2f} ms  (best of {args.repeat}; "
              f"{args.rows} rows x {args.sites} sites -> {args.grid_size} grid points)")
    if len(times) == 2:
        print(f"speed-up: {times['python'] / times['compiled']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
