import os
import subprocess
import sys

import numpy as np
import pytest

from factor_rlct import kernels
from factor_rlct.factor_model import fiber_sos, scenario

cython = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")


def test_sos_batch_matches_direct_evaluation():
    point = scenario("generic3")
    key = kernels.counter_key(1, 0)
    sos = kernels.sos_batch(point.sigma0, 1, 2.0, key, 0, 64, impl=kernels.backend_module("python"))
    u = kernels._pykernels.uniforms(key, np.arange(64 * 3, dtype=np.uint64))
    lam = (2.0 * (2.0 * u - 1.0)).reshape(64, 3, 1)
    assert np.allclose(sos, fiber_sos(point, lam), rtol=1e-12, atol=1e-12)


@cython
def test_backends_agree_bitwise():
    point = scenario("two3")
    key = kernels.counter_key(2, 0)
    py, cy = (kernels.backend_module(n) for n in ("python", "cython"))
    for k in (1, 2):
        a = kernels.sos_batch(point.sigma0, k, 1.5, key, 1000, 5000, impl=py)
        b = kernels.sos_batch(point.sigma0, k, 1.5, key, 1000, 5000, impl=cy)
        assert np.array_equal(a, b)
    thr = [1.0, 0.1, 0.01]
    a = kernels.count_below_many(point.sigma0, 1, 1.5, key, 300_000, thr, threads=1, impl=py)
    b = kernels.count_below_many(point.sigma0, 1, 1.5, key, 300_000, thr, threads=1, impl=cy)
    assert np.array_equal(a, b)


@cython
def test_nll_backends_agree():
    rng = np.random.default_rng(0)
    psi = rng.exponential(size=(500, 3))
    lam = rng.normal(size=(500, 3, 2))
    s = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 1.5]])
    a = kernels.nll_batch(psi, lam, s, impl=kernels.backend_module("python"))
    b = kernels.nll_batch(psi, lam, s, impl=kernels.backend_module("cython"))
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


def test_nll_batch_against_numpy():
    rng = np.random.default_rng(1)
    psi = rng.exponential(size=(20, 4)) + 0.1
    lam = rng.normal(size=(20, 4, 1))
    s = np.eye(4) + 0.3
    got = kernels.nll_batch(psi, lam, s)
    for i in range(20):
        sig = np.diag(psi[i]) + lam[i] @ lam[i].T
        want = 0.5 * np.linalg.slogdet(sig)[1] + 0.5 * np.trace(np.linalg.solve(sig, s))
        assert got[i] == pytest.approx(want, rel=1e-12)
    bad = kernels.nll_batch(-np.ones((1, 4)), np.zeros((1, 4, 1)), s)
    assert np.isinf(bad[0])


def test_counts_independent_of_threads():
    point = scenario("diag3")
    key = kernels.counter_key(4, 0)
    n = 3 * kernels.CHUNK + 123
    counts = [kernels.count_below_many(point.sigma0, 1, 2.0, key, n, [0.5, 0.05], threads=t) for t in (1, 2, 5)]
    assert all(np.array_equal(counts[0], c) for c in counts)
    single = kernels.count_below(point.sigma0, 1, 2.0, key, n, 0.05, threads=3)
    assert single == counts[0][1]


def test_count_prefix_consistency():
    # the first m draws are the same whatever the total budget
    point = scenario("generic3")
    key = kernels.counter_key(5, 0)
    total = kernels.sos_batch(point.sigma0, 1, 2.0, key, 0, 2000)
    assert kernels.count_below(point.sigma0, 1, 2.0, key, 2000, 1.0, threads=1) == np.count_nonzero(total < 1.0)
    tail = kernels.sos_batch(point.sigma0, 1, 2.0, key, 1000, 1000)
    assert np.array_equal(tail, total[1000:])


def test_thresholds_must_decrease():
    with pytest.raises(ValueError):
        kernels.count_below_many(np.eye(3), 1, 1.0, 0, 100, [0.1, 0.2])


def test_pure_env_selects_fallback():
    env = dict(os.environ, FACTOR_RLCT_PURE="1")
    out = subprocess.run(
        [sys.executable, "-c", "from factor_rlct import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
