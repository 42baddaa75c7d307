import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from factor_rlct.evidence import (
    EvidenceEstimate,
    EvidenceError,
    PriorSpec,
    _log_mean_exp,
    bic_score,
    evidence_experiment,
    fit_learning_coefficient,
    log_marginal_likelihood,
    sbic_experiment,
    sbic_scores,
    watanabe_deviation,
)
from factor_rlct.factor_model import (
    FactorModelPoint,
    SampleCovariance,
    min_neg_log_lik,
    model_dimension,
    sample_data,
    scenario,
)


def quadrature_log_evidence(s, n, rate=1.0):
    """log of int_0^inf exp(-n l(psi | s)) rate e^{-rate psi} d psi, in t = log psi."""
    def log_f(t):
        psi = math.exp(t)
        nll = 0.5 * math.log(2 * math.pi) + 0.5 * t + 0.5 * s / psi
        return -n * nll + math.log(rate) - rate * psi + t

    peak = math.log(s)  # the likelihood peak dominates at n = 100
    top = log_f(peak)
    val, _ = quad(lambda t: math.exp(log_f(t) - top), peak - 6, peak + 6, points=[peak], epsabs=0, epsrel=1e-11, limit=200)
    return top + math.log(val)


@pytest.mark.parametrize("method", ["smc", "prior"])
def test_one_dimensional_quadrature(method):
    s = SampleCovariance([[1.3]], 100)
    want = quadrature_log_evidence(1.3, 100)
    est = log_marginal_likelihood(s, 0, num_draws=40_000, seed=2, method=method)
    assert abs(est.log_marginal - want) / abs(want) < 1e-3


def test_n_zero_gives_zero():
    est = log_marginal_likelihood(SampleCovariance(np.eye(2), 0), 1, num_draws=1000)
    assert est.log_marginal == 0.0 and est.mc_stderr == 0.0


def test_validation():
    s = SampleCovariance(np.eye(2), 10)
    with pytest.raises(ValueError):
        log_marginal_likelihood(s, 3)
    with pytest.raises(ValueError):
        log_marginal_likelihood(s, 1, num_draws=999)
    with pytest.raises(ValueError):
        log_marginal_likelihood(s, 1, method="bogus")
    with pytest.raises(ValueError):
        PriorSpec(psi_rate=0)
    with pytest.raises(ValueError):
        EvidenceEstimate(0.0, -1.0, 1, 0, 1000, 0)
    with pytest.raises(EvidenceError):
        _log_mean_exp(np.full(10, -np.inf))


def test_monotone_in_model():
    # truth in M_1 but not M_0, so the larger model must score at least as high
    s = sample_data(scenario("generic3"), 200, 4)
    e0, e1 = (log_marginal_likelihood(s, k, num_draws=8000, seed=1) for k in (0, 1))
    assert e1.log_marginal >= e0.log_marginal - 3 * math.hypot(e0.mc_stderr, e1.mc_stderr)


def test_log_sum_exp_permutation_stable():
    rng = np.random.default_rng(0)
    x = rng.normal(-5000.0, 30.0, size=100_000)
    a, _ = _log_mean_exp(x)
    b, _ = _log_mean_exp(rng.permutation(x))
    assert abs(a - b) < 1e-9


def test_deterministic_across_threads():
    s = sample_data(scenario("diag3"), 100, 0)
    a = log_marginal_likelihood(s, 1, num_draws=4000, seed=9, threads=1)
    b = log_marginal_likelihood(s, 1, num_draws=4000, seed=9, threads=4)
    assert a.log_marginal == b.log_marginal and a.mc_stderr == b.mc_stderr
    p1 = log_marginal_likelihood(s, 1, num_draws=4000, seed=9, method="prior")
    p2 = log_marginal_likelihood(s, 1, num_draws=4000, seed=9, method="prior")
    assert p1 == p2


def test_watanabe_identity():
    s = sample_data(scenario("diag3"), 60, 3)
    est = log_marginal_likelihood(s, 1, num_draws=2000, seed=0)
    f = watanabe_deviation(est, s)
    assert math.isfinite(f)
    assert f + s.n * min_neg_log_lik(s) == pytest.approx(-est.log_marginal, abs=1e-9)


def test_noiseless_fit():
    pts = [(n, 2.25 * math.log(n) + 1.0) for n in (50, 100, 200, 400, 800)]
    fit = fit_learning_coefficient(pts)
    assert abs(fit.ell_hat - 2.25) < 1e-10 and abs(fit.intercept - 1.0) < 1e-10
    pts = [(n, 3.0 * math.log(n) - 0.5 * math.log(math.log(n)) + 2) for n in (50, 100, 200, 400, 800)]
    fit = fit_learning_coefficient(pts, use_loglog=True)
    assert abs(fit.ell_hat - 3.0) < 1e-8 and abs(fit.loglog_coef - 0.5) < 1e-8
    with pytest.raises(ValueError):
        fit_learning_coefficient(pts[:3])
    with pytest.raises(ValueError):
        fit_learning_coefficient([(10, 1.0), (50, 2.0), (100, 3.0), (200, 4.0)])


def test_bic_examples():
    assert bic_score(0.0, 5, 2, math.e) == pytest.approx(-7.0, abs=1e-12)
    n = 200
    assert bic_score(1.0, 4, 0, n) == pytest.approx(1.0 - 2 * math.log(n))
    scores = [bic_score(0.0, 6, k, n) for k in range(4)]
    assert scores == sorted(scores, reverse=True)


def test_sbic_reduction_and_single_model():
    p, n = 5, 200
    lls = [-1510.0, -1500.0, -1498.0]
    forced = {(i, j): (model_dimension(p, i)[1] / 2, 1) for i in range(3) for j in range(i + 1)}
    sbic = sbic_scores(lls, p, n, forced)
    for k in range(3):
        assert sbic[k] == pytest.approx(bic_score(lls[k], p, k, n), abs=1e-9)
    assert sbic_scores(lls[:1], p, n)[0] == pytest.approx(bic_score(lls[0], p, 0, n), abs=1e-9)
    with pytest.raises(ValueError):
        sbic_scores([float("nan")], p, n)


@settings(max_examples=300)
@given(st.data())
def test_sbic_at_least_bic(data):
    p = data.draw(st.integers(2, 6))
    k_max = data.draw(st.integers(0, min(p, 3)))
    n = data.draw(st.integers(3, 10**5))
    lls = data.draw(st.lists(st.floats(-1e4, 0), min_size=k_max + 1, max_size=k_max + 1))
    pen = {}
    for i in range(k_max + 1):
        half = model_dimension(p, i)[1] / 2
        for j in range(i + 1):
            value = half if i == j else data.draw(st.floats(0.1, half))
            pen[(i, j)] = (value, data.draw(st.integers(1, 3)) if i != j else 1)
    sbic = sbic_scores(lls, p, n, pen)
    for k in range(k_max + 1):
        assert sbic[k] >= bic_score(lls[k], p, k, n) - 1e-9 * max(1.0, abs(sbic[k]))


def test_small_experiments_run():
    exp = evidence_experiment(scenario("generic3"), 1, (40, 80, 160, 320), replicates=2, draws=2000, seed=1)
    assert len(exp.rows) == 8 and len(exp.fits) == 2
    assert exp.to_csv().splitlines()[0] == "replicate,n,k,log_marginal,stderr,F_n"
    again = evidence_experiment(scenario("generic3"), 1, (40, 80, 160, 320), replicates=2, draws=2000, seed=1, threads=2)
    assert again.rows == exp.rows
    sb = sbic_experiment(p=4, k_max=1, true_r=0, n=100, replicates=5, seed=0)
    freqs = sb.frequencies()
    assert set(freqs) == {"BIC", "sBIC"} and all(abs(sum(v) - 1) < 1e-12 for v in freqs.values())


def test_sbic_matches_direct_solve_and_survives_large_gaps():
    p, n = 4, 50
    lls = [-3.0, -1.0, -0.5]
    pen = {(i, j): (model_dimension(p, i)[1] / 2 - 0.5 * (i - j), 1 + (i - j)) for i in range(3) for j in range(i + 1)}
    ln, lln = math.log(n), math.log(math.log(n))
    L = lambda i, j: math.exp(lls[i] - pen[(i, j)][0] * ln + (pen[(i, j)][1] - 1) * lln)  # noqa: E731
    want = []
    for i in range(3):
        b = sum(want) - L(i, i)
        c = sum(L(i, j) * want[j] for j in range(i))
        want.append((-b + math.sqrt(b * b + 4 * c)) / 2)
    got = sbic_scores(lls, p, n, pen)
    assert np.allclose(got, np.log(want), rtol=0, atol=1e-12)
    far = sbic_scores([0.0, -5000.0, 3000.0], p, n, pen)
    assert all(math.isfinite(v) for v in far)
    assert far[1] >= bic_score(-5000.0, p, 1, n)
