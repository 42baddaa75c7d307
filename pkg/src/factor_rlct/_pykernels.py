"""Pure numpy versions of the compiled kernels.

The volume kernels reproduce the compiled arithmetic operation by operation
(no fused multiply-add, same summation order), so counts agree bit for bit.
``nll_batch`` follows the same Cholesky recurrence; it can differ from the
compiled version in the last ulp because ``log`` comes from a different libm.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
TWO_M53 = 1.0 / 9007199254740992.0


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniforms(key: int, counters: np.ndarray) -> np.ndarray:
    """Counter-based uniforms in ``[0, 1)`` with 53 random bits."""
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (counters.astype(np.uint64) + np.uint64(1)) * GOLDEN
        return (_mix(z) >> np.uint64(11)).astype(np.float64) * TWO_M53


def _draw(p, k, radius, key, start, count) -> np.ndarray:
    d = p * k
    idx = np.arange(start, start + count, dtype=np.uint64)
    counters = idx[:, None] * np.uint64(d) + np.arange(d, dtype=np.uint64)[None, :]
    return radius * (2.0 * uniforms(key, counters) - 1.0)


def sos_batch(sig, p, k, radius, key, start, count) -> np.ndarray:
    sig = np.ascontiguousarray(sig, dtype=np.float64)
    lam = _draw(p, k, radius, key, start, count)
    sos = np.zeros(count)
    t = 0
    for i in range(p):
        for j in range(i + 1, p):
            acc = lam[:, i * k] * lam[:, j * k]
            for l in range(1, k):
                acc = acc + lam[:, i * k + l] * lam[:, j * k + l]
            g = acc - sig[t]
            sos = sos + g * g
            t += 1
    return sos


def count_below(sig, p, k, radius, key, start, count, threshold) -> int:
    return int(np.count_nonzero(sos_batch(sig, p, k, radius, key, start, count) < threshold))


def nll_batch(psi, lam, S) -> np.ndarray:
    """``0.5 log det Sigma + 0.5 tr(Sigma^-1 S)`` per draw; ``inf`` if not PD."""
    psi = np.asarray(psi, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    N, p = psi.shape
    k = lam.shape[2]
    L = np.zeros((p, p, N))
    for i in range(p):
        for j in range(i + 1):
            acc = np.zeros(N)
            for l in range(k):
                acc = acc + lam[:, i, l] * lam[:, j, l]
            if i == j:
                acc = acc + psi[:, i]
            L[i, j] = acc
    ok = np.ones(N, dtype=bool)
    half_logdet = np.zeros(N)
    with np.errstate(invalid="ignore", divide="ignore"):
        for j in range(p):
            acc = L[j, j].copy()
            for l in range(j):
                acc = acc - L[j, l] * L[j, l]
            ok &= acc > 0.0
            acc = np.where(ok, acc, 1.0)
            L[j, j] = np.sqrt(acc)
            half_logdet = half_logdet + np.log(L[j, j])
            for i in range(j + 1, p):
                acc = L[i, j].copy()
                for l in range(j):
                    acc = acc - L[i, l] * L[j, l]
                L[i, j] = acc / L[j, j]
        W = np.zeros((p, p, N))
        for c in range(p):
            for i in range(p):
                acc = np.full(N, S[i, c])
                for l in range(i):
                    acc = acc - L[i, l] * W[l, c]
                W[i, c] = acc / L[i, i]
        tr = np.zeros(N)
        for c in range(p):
            v = []
            for i in range(c + 1):
                acc = W[c, i].copy()
                for l in range(i):
                    acc = acc - L[i, l] * v[l]
                v.append(acc / L[i, i])
            tr = tr + v[c]
    out = half_logdet + 0.5 * tr
    out[~ok] = np.inf
    return out


def count_below_many(sig, p, k, radius, key, start, count, thresholds) -> np.ndarray:
    """Counts below each of ``thresholds`` (sorted in decreasing order)."""
    sos = sos_batch(sig, p, k, radius, key, start, count)
    return np.array([np.count_nonzero(sos < t) for t in thresholds], dtype=np.int64)
