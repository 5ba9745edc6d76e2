"""Benchmark the compiled SMO core against the pure numpy fallback.

Both backends run the identical algorithm on identical kernel matrices, so
the comparison is pure solver overhead. Run:

    python benchmarks/bench_smo.py [--sizes 500,1000,2000,4000] [--repeats 3]
"""

import argparse
import time

import numpy as np

from neosda import smo
from neosda.model import kernel_matrix


def make_problem(n, d=22, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, d))
    w = rng.normal(0, 1, d)
    y = np.where(x @ w + rng.normal(0, 0.8, n) > 0, 1.0, -1.0)
    if abs(y.sum()) == n:
        y[0] = -y[0]
    k = kernel_matrix(x, x, "rbf", 1.0 / d)
    return k, y


def bench(solver, k, y, c, repeats):
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = solver(k, y, c, 1e-3, 100 * len(y))
        times.append(time.perf_counter() - t0)
    return min(times), result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="500,1000,2000,4000")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--c", type=float, default=10.0)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    backends = smo.available_backends()
    print(f"available backends: {', '.join(sorted(backends))}")
    header = f"{'n':>6} " + "".join(f"{name:>12}" for name in sorted(backends))
    if len(backends) == 2:
        header += f"{'speedup':>10}{'identical':>11}"
    print(header)

    for n in sizes:
        k, y = make_problem(n)
        row = f"{n:>6} "
        results = {}
        times = {}
        for name in sorted(backends):
            times[name], results[name] = bench(backends[name], k, y, args.c, args.repeats)
            row += f"{times[name]:>11.3f}s"
        if len(backends) == 2:
            row += f"{times['python'] / times['cython']:>9.1f}x"
            same = np.array_equal(results["python"][0], results["cython"][0])
            row += f"{'yes' if same else 'NO':>11}"
        print(row)


if __name__ == "__main__":
    main()
