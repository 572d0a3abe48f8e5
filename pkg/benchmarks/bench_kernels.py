"""Benchmark the numba-jitted kernels against their pure-numpy twins.

Run: python benchmarks/bench_kernels.py
The numba path needs one warmup call per kernel to absorb JIT compilation;
set EVCOREF_NO_NUMBA=1 at import time elsewhere to force the numpy path in
the package itself.
"""

import time

import numpy as np

from evcoref import kernels


def timeit(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def random_sim(rng, n):
    s = rng.random((n, n))
    s = (s + s.T) / 2
    np.fill_diagonal(s, 1.0)
    return s


def main():
    rng = np.random.default_rng(0)
    if not kernels.HAS_NUMBA:
        print("numba unavailable: only the numpy path can run")
        return

    # warmup to compile
    kernels.merge_sequence_numba(random_sim(rng, 8))
    kernels.lsap_min_numba(rng.random((8, 8)))

    print("single-linkage merge sequence (dense similarity matrix)")
    print(f"{'n':>6} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for n in (100, 200, 400, 800):
        sims = random_sim(rng, n)
        t_np = timeit(kernels.merge_sequence_numpy, sims)
        t_nb = timeit(kernels.merge_sequence_numba, sims)
        a = kernels.merge_sequence_numpy(sims)
        b = kernels.merge_sequence_numba(sims)
        assert all(np.array_equal(x, y) for x, y in zip(a, b)), "paths disagree"
        print(f"{n:>6} {t_np * 1e3:>9.1f}ms {t_nb * 1e3:>9.1f}ms {t_np / t_nb:>7.1f}x")

    print()
    print("optimal assignment (square cost matrix)")
    print(f"{'n':>6} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for n in (50, 100, 200, 400):
        cost = rng.normal(size=(n, n))
        t_np = timeit(kernels.lsap_min_numpy, cost)
        t_nb = timeit(kernels.lsap_min_numba, cost)
        ta = cost[np.arange(n), kernels.lsap_min_numpy(cost)].sum()
        tb = cost[np.arange(n), kernels.lsap_min_numba(cost)].sum()
        assert abs(ta - tb) < 1e-9, "paths disagree"
        print(f"{n:>6} {t_np * 1e3:>9.1f}ms {t_nb * 1e3:>9.1f}ms {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
