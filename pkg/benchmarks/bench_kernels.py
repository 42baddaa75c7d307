"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--samples N] [--draws N]

Reports wall time per backend and checks that both give the same answers.
"""

import argparse
import time

import numpy as np

from factor_rlct import kernels
from factor_rlct.factor_model import scenario


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=4_000_000)
    ap.add_argument("--draws", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    try:
        compiled = kernels.backend_module("cython")
    except ImportError:
        print("compiled kernels are not built; only the fallback is available")
        return
    fallback = kernels.backend_module("python")
    sigma = scenario("generic3").sigma0
    key = kernels.counter_key(0)
    thresholds = [1.0, 0.1, 0.01]

    print(f"level-set counts, {args.samples} draws, p=3, k=1")
    res = {}
    for name, impl in (("cython", compiled), ("python", fallback)):
        t, counts = best_of(
            lambda: kernels.count_below_many(sigma, 1, 2.83, key, args.samples, thresholds, threads=1, impl=impl),
            args.repeat,
        )
        res[name] = counts
        print(f"  {name:7s} {t:8.3f} s  {args.samples / t / 1e6:8.1f} M draws/s  counts={counts.tolist()}")
    print(f"  identical counts: {np.array_equal(res['cython'], res['python'])}")

    rng = np.random.default_rng(0)
    psi = rng.exponential(size=(args.draws, 3))
    lam = rng.normal(size=(args.draws, 3, 1))
    S = np.eye(3)
    print(f"batched Gaussian NLL, {args.draws} draws, p=3, k=1")
    out = {}
    for name, impl in (("cython", compiled), ("python", fallback)):
        t, v = best_of(lambda: kernels.nll_batch(psi, lam, S, impl=impl), args.repeat)
        out[name] = v
        print(f"  {name:7s} {t:8.3f} s  {args.draws / t / 1e6:8.2f} M draws/s")
    print(f"  max abs difference: {np.max(np.abs(out['cython'] - out['python'])):.3e}")


if __name__ == "__main__":
    main()
