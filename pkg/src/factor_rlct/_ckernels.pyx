# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops.  Must stay bit-compatible with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t counter) noexcept nogil:
    return <double>(_mix(key + (counter + 1) * GOLDEN) >> 11) * TWO_M53


cdef inline double _sos_one(const double[::1] sig, int p, int k, double radius,
                            uint64_t key, uint64_t base, double* lam) noexcept nogil:
    cdef int d = p * k
    cdef int c, i, j, l, t
    cdef double acc, g, sos
    for c in range(d):
        lam[c] = radius * (2.0 * _uniform(key, base + c) - 1.0)
    sos = 0.0
    t = 0
    for i in range(p):
        for j in range(i + 1, p):
            acc = lam[i * k] * lam[j * k]
            for l in range(1, k):
                acc = acc + lam[i * k + l] * lam[j * k + l]
            g = acc - sig[t]
            sos = sos + g * g
            t += 1
    return sos


def sos_batch(const double[::1] sig, int p, int k, double radius, uint64_t key,
              int64_t start, int64_t count):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double[::1] buf = np.empty(max(p * k, 1), dtype=np.float64)
    cdef double* lam = &buf[0]
    cdef int64_t s
    cdef uint64_t d = p * k
    with nogil:
        for s in range(count):
            ov[s] = _sos_one(sig, p, k, radius, key, <uint64_t>(start + s) * d, lam)
    return out


def count_below(const double[::1] sig, int p, int k, double radius, uint64_t key,
                int64_t start, int64_t count, double threshold):
    cdef double[::1] buf = np.empty(max(p * k, 1), dtype=np.float64)
    cdef double* lam = &buf[0]
    cdef int64_t s, hits = 0
    cdef uint64_t d = p * k
    with nogil:
        for s in range(count):
            if _sos_one(sig, p, k, radius, key, <uint64_t>(start + s) * d, lam) < threshold:
                hits += 1
    return hits


def count_below_many(const double[::1] sig, int p, int k, double radius, uint64_t key,
                     int64_t start, int64_t count, const double[::1] thresholds):
    """Counts below each of ``thresholds`` (sorted in decreasing order)."""
    cdef Py_ssize_t T = thresholds.shape[0], t
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hits = np.zeros(T, dtype=np.int64)
    cdef int64_t[::1] hv = hits
    cdef double[::1] buf = np.empty(max(p * k, 1), dtype=np.float64)
    cdef double* lam = &buf[0]
    cdef int64_t s
    cdef double v
    cdef uint64_t d = p * k
    with nogil:
        for s in range(count):
            v = _sos_one(sig, p, k, radius, key, <uint64_t>(start + s) * d, lam)
            for t in range(T):
                if v < thresholds[t]:
                    hv[t] += 1
                else:
                    break
    return hits


cdef inline double _solve_diag(double[:, ::1] L, double[:, ::1] W, Py_ssize_t c,
                               Py_ssize_t p) noexcept nogil:
    # c-th entry of L^-1 applied to row c of W; needs v_0..v_c
    cdef double v[64]
    cdef Py_ssize_t i, l
    cdef double acc
    for i in range(c + 1):
        acc = W[c, i]
        for l in range(i):
            acc = acc - L[i, l] * v[l]
        v[i] = acc / L[i, i]
    return v[c]


def nll_batch(const double[:, ::1] psi, const double[:, :, ::1] lam, const double[:, ::1] S):
    """``0.5 log det Sigma + 0.5 tr(Sigma^-1 S)`` per draw; ``inf`` if not PD."""
    cdef Py_ssize_t N = psi.shape[0], p = psi.shape[1], k = lam.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(N, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double[:, ::1] L = np.empty((p, p), dtype=np.float64)
    cdef double[:, ::1] W = np.empty((p, p), dtype=np.float64)
    cdef Py_ssize_t n, i, j, l, c
    cdef double acc, half_logdet, tr
    cdef bint ok
    with nogil:
        for n in range(N):
            # Sigma (lower triangle) into L, then in-place Cholesky
            for i in range(p):
                for j in range(i + 1):
                    acc = 0.0
                    for l in range(k):
                        acc = acc + lam[n, i, l] * lam[n, j, l]
                    if i == j:
                        acc = acc + psi[n, i]
                    L[i, j] = acc
            ok = True
            half_logdet = 0.0
            for j in range(p):
                acc = L[j, j]
                for l in range(j):
                    acc = acc - L[j, l] * L[j, l]
                if not (acc > 0.0):
                    ok = False
                    break
                L[j, j] = sqrt(acc)
                half_logdet = half_logdet + log(L[j, j])
                for i in range(j + 1, p):
                    acc = L[i, j]
                    for l in range(j):
                        acc = acc - L[i, l] * L[j, l]
                    L[i, j] = acc / L[j, j]
            if not ok:
                ov[n] = INFINITY
                continue
            # W = L^-1 S (forward substitution, column by column)
            for c in range(p):
                for i in range(p):
                    acc = S[i, c]
                    for l in range(i):
                        acc = acc - L[i, l] * W[l, c]
                    W[i, c] = acc / L[i, i]
            # tr(Sigma^-1 S) = tr(L^-1 W^T)
            tr = 0.0
            for c in range(p):
                tr = tr + _solve_diag(L, W, c, p)
            ov[n] = half_logdet + 0.5 * tr
    return out
