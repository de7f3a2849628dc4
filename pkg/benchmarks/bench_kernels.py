"""Compare the compiled kernels against the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Both backends compute identical results (the test suite enforces bitwise
equality); this script only measures speed. Times are the best of
`--repeats` runs, which suppresses scheduler noise.
"""
import argparse
import math
import time

import numpy as np

from oslk._kernels import _pure
from oslk.geometry import Box3D, bev_corners

try:
    from oslk._kernels import _core
except ImportError:
    _core = None


def random_corners(rng, n, spread=20.0):
    out = np.empty((n, 4, 2))
    for i in range(n):
        box = Box3D(
            x=float(rng.uniform(-spread, spread)),
            y=float(rng.uniform(-spread, spread)),
            z=0.0,
            w=float(rng.uniform(0.5, 3.0)),
            l=float(rng.uniform(0.5, 6.0)),
            h=1.0,
            r=float(rng.uniform(-math.pi, math.pi)),
        )
        out[i] = bev_corners(box)
    return out


def best_time(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def fmt(seconds):
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:8.2f} ms"
    return f"{seconds:8.3f} s "


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _core is None:
        print("compiled extension not built; showing the pure backend only")
    backends = [("pure", _pure)] + ([("compiled", _core)] if _core else [])

    rng = np.random.default_rng(0)
    print(f"{'workload':<34}" + "".join(f"{name:>14}" for name, _ in backends) + "   speedup")

    cases = []
    for n, m in [(50, 50), (200, 200), (500, 500)]:
        A = random_corners(rng, n)
        B = random_corners(rng, m)
        cases.append(
            (
                f"pairwise intersection {n}x{m}",
                lambda impl, A=A, B=B: impl.pairwise_rect_intersection_area(A, B),
            )
        )
    for size in [10, 50, 150, 300]:
        costs = rng.uniform(0.0, 10.0, size=(size, size))
        cases.append(
            (f"assignment {size}x{size}", lambda impl, c=costs: impl.lap_solve(c))
        )

    for label, runner in cases:
        times = [best_time(lambda impl=impl: runner(impl), args.repeats) for _, impl in backends]
        row = f"{label:<34}" + "".join(f"{fmt(t):>14}" for t in times)
        if len(times) == 2 and times[1] > 0:
            row += f"   {times[0] / times[1]:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
