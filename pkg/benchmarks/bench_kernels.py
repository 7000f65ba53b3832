#!/usr/bin/env python3
"""Time the numba and numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--sizes 256 512 1024] [--repeats 5]

Numba is warmed up first so compilation is excluded. Each row also reports
whether the two paths agree (bitwise for the simplex rows, to 1e-12 for
distances).
"""
import argparse
import time

import numpy as np

from angpn import _kernels as K


def best_of(fn, arg, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(arg)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 512, 1024])
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    warm = rng.standard_normal((8, 3))
    K.pairwise_distances_numba(warm)
    K.simplex_rows_numba(-K.pairwise_distances_numba(warm))

    print(f"{'kernel':<10}{'n':>6}{'numpy ms':>12}{'numba ms':>12}{'speedup':>9}  agree")
    for n in args.sizes:
        x = rng.standard_normal((n, args.dim))
        for name, np_fn, nb_fn, arg in (
            ("distances", K.pairwise_distances_numpy, K.pairwise_distances_numba, x),
            ("simplex", K.simplex_rows_numpy, K.simplex_rows_numba,
             -K.pairwise_distances_numpy(x) / 2.0),
        ):
            a = best_of(np_fn, arg, args.repeats)
            b = best_of(nb_fn, arg, args.repeats)
            ra, rb = np_fn(arg), nb_fn(arg)
            if name == "simplex":
                agree = all(np.array_equal(p, q) for p, q in zip(ra, rb))
            else:
                agree = np.allclose(ra, rb, rtol=0, atol=1e-12)
            print(f"{name:<10}{n:>6}{1e3 * a:>12.2f}{1e3 * b:>12.2f}{a / b:>8.1f}x  {agree}")


if __name__ == "__main__":
    main()
