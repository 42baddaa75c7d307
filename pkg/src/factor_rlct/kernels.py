"""Backend selection for the hot loops.

The compiled extension is used when it was built; otherwise (or when
``FACTOR_RLCT_PURE=1`` is set) the numpy fallback takes over.  Both produce
identical level-set counts for identical arguments.

Work is split into fixed-size chunks whose random streams depend only on the
global sample index, so totals do not depend on the chunking or on the number
of threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernels

__all__ = ["BACKEND", "CHUNK", "backend_module", "counter_key", "count_below", "count_below_many", "sos_batch", "nll_batch"]

CHUNK = 1 << 18


def _load():
    if os.environ.get("FACTOR_RLCT_PURE", "") not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load()


def backend_module(name: str | None = None):
    """The kernel module for ``name`` ("cython" or "python"); default is the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def counter_key(seed: int, *stream: int) -> int:
    """A 64-bit key for the counter-based generator, derived from ``seed`` and a stream path."""
    ss = np.random.SeedSequence([int(seed), *map(int, stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _threads(threads: int | None) -> int:
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise ValueError("threads must be positive")
    return threads


def _sig_vector(sigma: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(sigma.shape[0], 1)
    return np.ascontiguousarray(sigma[iu], dtype=np.float64)


def count_below(sigma, k, radius, key, samples, threshold, threads=None, impl=None) -> int:
    """Number of the first ``samples`` uniform loadings with fiber sum of squares below ``threshold``."""
    impl = impl or _impl
    sigma = np.asarray(sigma, dtype=np.float64)
    p = sigma.shape[0]
    sig = _sig_vector(sigma)
    starts = range(0, samples, CHUNK)

    def work(start):
        n = min(CHUNK, samples - start)
        return impl.count_below(sig, p, k, float(radius), key, start, n, float(threshold))

    nt = _threads(threads)
    if nt == 1 or len(starts) == 1:
        return sum(map(work, starts))
    with ThreadPoolExecutor(nt) as pool:
        return sum(pool.map(work, starts))


def count_below_many(sigma, k, radius, key, samples, thresholds, threads=None, impl=None) -> np.ndarray:
    """Counts below each threshold (decreasing) over one shared set of ``samples`` draws."""
    impl = impl or _impl
    sigma = np.asarray(sigma, dtype=np.float64)
    p = sigma.shape[0]
    sig = _sig_vector(sigma)
    thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thr) >= 0):
        raise ValueError("thresholds must be strictly decreasing")
    starts = range(0, samples, CHUNK)

    def work(start):
        n = min(CHUNK, samples - start)
        return impl.count_below_many(sig, p, k, float(radius), key, start, n, thr)

    nt = _threads(threads)
    total = np.zeros(len(thr), dtype=np.int64)
    if nt == 1 or len(starts) == 1:
        parts = list(map(work, starts))
    else:
        with ThreadPoolExecutor(nt) as pool:
            parts = list(pool.map(work, starts))
    for part in parts:
        total += part
    return total


def sos_batch(sigma, k, radius, key, start, count, impl=None) -> np.ndarray:
    impl = impl or _impl
    sigma = np.asarray(sigma, dtype=np.float64)
    return impl.sos_batch(_sig_vector(sigma), sigma.shape[0], k, float(radius), key, start, count)


def nll_batch(psi, lam, S, impl=None) -> np.ndarray:
    """Per-draw ``0.5 log det Sigma + 0.5 tr(Sigma^-1 S)``; ``inf`` where Sigma is not PD."""
    impl = impl or _impl
    psi = np.ascontiguousarray(psi, dtype=np.float64)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    S = np.ascontiguousarray(S, dtype=np.float64)
    if psi.shape[1] > 64:
        impl = _pykernels
    return impl.nll_batch(psi, lam, S)
