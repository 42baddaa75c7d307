"""Marginal likelihood of the k-factor model, learning-coefficient regression, BIC and sBIC.

The marginal likelihood is

    L_{k,n}(S_n) = integral of exp(-n ell(Sigma_k(psi, Lambda) | S_n)) phi_k(psi, Lambda)

with ``ell`` the normalized Gaussian negative log-likelihood.  Two estimators
are provided:

``method="smc"`` (default)
    Sequential Monte Carlo from the prior to the posterior with adaptive
    tempering.  Several independent batches give the standard error.
``method="prior"``
    Plain averaging over prior draws.  Unbiased, but its variance explodes
    with ``n`` because the posterior mass sits in a tiny part of the prior.

Both work with the misfit ``ell - ell_min(S_n)`` so that the returned
quantities stay O(log n) instead of O(n).
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .factor_model import (
    LOG_2PI,
    FactorModelPoint,
    SampleCovariance,
    max_log_likelihood,
    min_neg_log_lik,
    model_dimension,
    sample_observations,
)
from .learning_table import LearningCoefficient, sbic_penalty_matrix

__all__ = [
    "PriorSpec",
    "EvidenceEstimate",
    "EvidenceError",
    "log_marginal_likelihood",
    "watanabe_deviation",
    "fit_learning_coefficient",
    "LearningFit",
    "bic_score",
    "sbic_scores",
    "evidence_experiment",
    "SlopeExperiment",
    "sbic_experiment",
    "SbicExperiment",
]

MIN_DRAWS = 1000


class EvidenceError(RuntimeError):
    """The Monte Carlo estimate is unusable (e.g. every draw underflowed)."""


@dataclass(frozen=True)
class PriorSpec:
    """``psi_i ~ Exp(psi_rate)`` and ``Lambda_il ~ N(0, lambda_sd^2)``, all independent."""

    psi_rate: float = 1.0
    lambda_sd: float = 1.0

    def __post_init__(self):
        if not (self.psi_rate > 0 and self.lambda_sd > 0):
            raise ValueError("psi_rate and lambda_sd must be positive")

    def sample(self, rng: np.random.Generator, size: int, p: int, k: int) -> np.ndarray:
        """Draws of ``theta = (log psi, vec Lambda)`` as a ``(size, p + p k)`` array."""
        psi = rng.exponential(1.0 / self.psi_rate, size=(size, p))
        lam = rng.normal(0.0, self.lambda_sd, size=(size, p * k))
        return np.concatenate([np.log(psi), lam], axis=1)

    def log_density(self, theta: np.ndarray, p: int) -> np.ndarray:
        """Log density of ``theta`` (log psi coordinates include the Jacobian)."""
        u, lam = theta[:, :p], theta[:, p:]
        d = lam.shape[1]
        out = np.sum(u - self.psi_rate * np.exp(u), axis=1) + p * math.log(self.psi_rate)
        out -= 0.5 * np.sum(lam * lam, axis=1) / self.lambda_sd**2
        out -= d * (0.5 * LOG_2PI + math.log(self.lambda_sd))
        return out


@dataclass(frozen=True)
class EvidenceEstimate:
    log_marginal: float
    mc_stderr: float
    n: int
    k: int
    num_draws: int
    seed: int
    method: str = "smc"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.mc_stderr >= 0:
            raise ValueError("stderr must be non-negative")


def _misfit_fn(s: SampleCovariance, k: int):
    p = s.p
    base = min_neg_log_lik(s) - 0.5 * p * LOG_2PI
    S = np.ascontiguousarray(s.s)

    def misfit(theta: np.ndarray) -> np.ndarray:
        psi = np.exp(theta[:, :p])
        lam = theta[:, p:].reshape(theta.shape[0], p, k)
        return kernels.nll_batch(psi, lam, S) - base

    return misfit


def _log_mean_exp(x: np.ndarray) -> tuple[float, float]:
    """``log mean exp(x)`` and its delta-method standard error."""
    x = np.asarray(x, dtype=float)
    n = x.size
    top = np.max(x)
    if not np.isfinite(top):
        raise EvidenceError("every draw has zero likelihood (log weight -inf)")
    w = np.exp(x - top)
    mean = w.mean()
    se = w.std(ddof=1) / math.sqrt(n) / mean if n > 1 else 0.0
    return float(top + math.log(mean)), float(se)


def _prior_mc(misfit, prior, n, p, k, draws, seed, chunk=1 << 14) -> tuple[float, float]:
    # chunked draws with a running log-sum-exp; chunks get their own streams
    children = np.random.SeedSequence(seed).spawn((draws + chunk - 1) // chunk)
    total = -np.inf
    total_sq = -np.inf
    for i, child in enumerate(children):
        size = min(chunk, draws - i * chunk)
        theta = prior.sample(np.random.default_rng(child), size, p, k)
        lw = -n * misfit(theta)
        total = np.logaddexp(total, logsumexp(lw))
        total_sq = np.logaddexp(total_sq, logsumexp(2 * lw))
    if not np.isfinite(total):
        raise EvidenceError("every draw has zero likelihood (log weight -inf)")
    log_mean = total - math.log(draws)
    # var(w)/mean(w)^2 = N sum w^2 / (sum w)^2 - 1
    rel_var = max(math.exp(total_sq - 2 * total + math.log(draws)) - 1.0, 0.0)
    return float(log_mean), math.sqrt(rel_var / draws)


def _fold_signs(lam: np.ndarray) -> np.ndarray:
    """Flip each loading column so its dominant row is positive (removes the sign symmetry)."""
    anchor = np.argmax(np.mean(np.abs(lam), axis=(0, 2)))
    sgn = np.sign(lam[:, anchor : anchor + 1, :])
    sgn[sgn == 0] = 1.0
    return lam * sgn


def _proposal_chol(theta: np.ndarray, p: int, k: int) -> np.ndarray:
    d = theta.shape[1]
    cov = np.zeros((d, d))
    cov[:p, :p] = np.atleast_2d(np.cov(theta[:, :p].T))
    if k:
        lam = _fold_signs(theta[:, p:].reshape(-1, p, k))
        cols = lam.transpose(0, 2, 1).reshape(-1, p)
        a = np.atleast_2d(np.cov(cols.T))
        cov[p:, p:] = np.kron(a, np.eye(k))
    cov *= 2.38**2 / d
    cov += 1e-10 * np.eye(d)
    return np.linalg.cholesky(cov)


def _systematic(rng, w: np.ndarray) -> np.ndarray:
    n = w.size
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, (rng.random() + np.arange(n)) / n)


def _next_beta(m: np.ndarray, beta: float, target: float) -> float:
    def ess(db):
        lw = -db * m
        w = np.exp(lw - lw.max())
        return w.sum() ** 2 / (w @ w)

    if ess(1.0 - beta) >= target:
        return 1.0
    lo, hi = 0.0, 1.0 - beta
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if ess(mid) >= target:
            lo = mid
        else:
            hi = mid
    return beta + max(lo, 1e-12)


def _smc(misfit, prior, n, p, k, particles, seed, mcmc_steps=10, ess_frac=0.5):
    rng = np.random.default_rng(seed)
    theta = prior.sample(rng, particles, p, k)
    m = n * misfit(theta)
    beta, log_z, scale, stages, acc_hist = 0.0, 0.0, 1.0, 0, []
    while beta < 1.0:
        nb = _next_beta(m, beta, ess_frac * particles)
        lw = -(nb - beta) * m
        log_z += logsumexp(lw) - math.log(particles)
        stages += 1
        if nb >= 1.0:
            break
        w = np.exp(lw - lw.max())
        idx = _systematic(rng, w / w.sum())
        theta, m, beta = theta[idx], m[idx], nb
        chol = _proposal_chol(theta, p, k)
        lp = prior.log_density(theta, p) - beta * m
        for _ in range(mcmc_steps):
            prop = theta + scale * rng.standard_normal(theta.shape) @ chol.T
            mp = n * misfit(prop)
            lpp = prior.log_density(prop, p) - beta * mp
            ok = np.log(rng.random(particles)) < lpp - lp
            theta[ok], m[ok], lp[ok] = prop[ok], mp[ok], lpp[ok]
            rate = float(ok.mean())
            scale *= math.exp(rate - 0.3)
            acc_hist.append(rate)
    return log_z, stages, float(np.mean(acc_hist)) if acc_hist else 1.0


def log_marginal_likelihood(
    s: SampleCovariance,
    k: int,
    prior: PriorSpec | None = None,
    num_draws: int = 20_000,
    seed: int = 0,
    *,
    method: str = "smc",
    batches: int = 4,
    mcmc_steps: int = 10,
    threads: int | None = 1,
) -> EvidenceEstimate:
    """Estimate ``log L_{k,n}(S_n)``.

    ``num_draws`` counts prior draws for ``method="prior"`` and particles
    summed over all batches for ``method="smc"``.  Results depend only on
    ``seed``, never on ``threads``.
    """
    prior = prior or PriorSpec()
    p, n = s.p, s.n
    if not (0 <= k <= p):
        raise ValueError(f"need 0 <= k <= p, got k={k}")
    if num_draws < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} draws, got {num_draws}")
    if n == 0:
        return EvidenceEstimate(0.0, 0.0, 0, k, num_draws, seed, method)
    misfit = _misfit_fn(s, k)
    offset = -n * min_neg_log_lik(s)
    if method == "prior":
        log_z, se = _prior_mc(misfit, prior, n, p, k, num_draws, seed)
        return EvidenceEstimate(offset + log_z, se, n, k, num_draws, seed, method)
    if method != "smc":
        raise ValueError(f"unknown method {method!r}")
    if batches < 2:
        raise ValueError("need at least two batches for a standard error")
    per = num_draws // batches
    seeds = np.random.SeedSequence(seed).spawn(batches)

    def run(child):
        return _smc(misfit, prior, n, p, k, per, child, mcmc_steps)

    nt = kernels._threads(threads)
    if nt == 1:
        out = [run(c) for c in seeds]
    else:
        with ThreadPoolExecutor(min(nt, batches)) as pool:
            out = list(pool.map(run, seeds))
    zs = np.array([o[0] for o in out])
    log_z, se = _log_mean_exp(zs)
    diag = {
        "batch_log_z": zs.tolist(),
        "stages": [o[1] for o in out],
        "acceptance": [o[2] for o in out],
    }
    return EvidenceEstimate(offset + log_z, se, n, k, per * batches, seed, method, diag)


def watanabe_deviation(est: EvidenceEstimate, s: SampleCovariance) -> float:
    """``F_n = -log L_{k,n} - n ell(S_n)``, the part that grows like ``ell_k log n``."""
    if est.n != s.n:
        raise ValueError("estimate and sample covariance disagree on n")
    if est.n == 0:
        return -est.log_marginal
    return -est.log_marginal - s.n * min_neg_log_lik(s)


@dataclass(frozen=True)
class LearningFit:
    ell_hat: float
    intercept: float
    stderr: float
    loglog_coef: float | None = None


def fit_learning_coefficient(points, use_loglog: bool = False) -> LearningFit:
    """Least-squares fit ``F_n ~ ell log n + c`` (optionally ``- (m-1) log log n``)."""
    pts = [(int(n), float(f)) for n, f in points]
    ns = np.array([n for n, _ in pts], dtype=float)
    if len(set(ns)) < 4:
        raise ValueError("need at least four distinct sample sizes")
    if np.any(ns < 20):
        raise ValueError("sample sizes must be at least 20")
    y = np.array([f for _, f in pts])
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite F_n value")
    cols = [np.log(ns), np.ones_like(ns)]
    if use_loglog:
        cols.append(-np.log(np.log(ns)))
    X = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = len(y) - X.shape[1]
    sigma2 = float(resid @ resid / dof) if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(X.T @ X)
    return LearningFit(
        float(beta[0]),
        float(beta[1]),
        math.sqrt(max(cov[0, 0], 0.0)),
        float(beta[2]) if use_loglog else None,
    )


def bic_score(max_loglik: float, p: int, k: int, n: int) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    return max_loglik - 0.5 * model_dimension(p, k)[1] * math.log(n)


def _penalty(cell) -> tuple[float, int]:
    if isinstance(cell, LearningCoefficient):
        return float(cell.value), cell.penalty_mult
    value, mult = cell
    return float(value), int(mult)


def sbic_scores(max_logliks, p: int, n: int, penalties=None) -> list[float]:
    """Singular BIC scores ``log L'_i`` for the nested models ``M_0 .. M_kmax``.

    ``penalties[(i, j)]`` (a :class:`LearningCoefficient` or a
    ``(value, mult)`` pair) is the learning coefficient of model ``i`` at a
    generic point of model ``j <= i``.  With

        L_ij = exp(loglik_i) n^(-ell_ij) (log n)^(m_ij - 1)

    the ``L'_i`` solve ``sum_{j<=i} (L'_i - L_ij) L'_j = 0``, taken from the
    sBIC construction of Drton and Plummer.  Each equation is a quadratic in
    ``L'_i`` once ``L'_0 .. L'_{i-1}`` are known; it is solved in log scale.
    """
    ll = [float(v) for v in max_logliks]
    if not all(math.isfinite(v) for v in ll):
        raise ValueError("log-likelihoods must be finite")
    k_max = len(ll) - 1
    if penalties is None:
        penalties = sbic_penalty_matrix(p, k_max)
    if n < 2:
        raise ValueError("sBIC needs n >= 2")
    log_n, loglog_n = math.log(n), math.log(math.log(n))

    def log_l(i, j):
        value, mult = _penalty(penalties[(i, j)])
        return ll[i] - value * log_n + (mult - 1) * loglog_n

    out: list[float] = []
    for i in range(k_max + 1):
        log_lii = log_l(i, i)
        if i == 0:
            out.append(log_lii)
            continue
        # x^2 + b x - c = 0 with b = sum_j L'_j - L_ii and c = sum_{j<i} L_ij L'_j,
        # all carried as logs and rescaled by e^s so nothing underflows
        prev = np.array(out)
        log_p = float(np.logaddexp.reduce(prev))
        log_c = float(np.logaddexp.reduce(np.array([log_l(i, j) for j in range(i)]) + prev))
        if log_p >= log_lii:
            sign, log_b = 1.0, log_p + math.log1p(-math.exp(log_lii - log_p)) if log_p > log_lii else -math.inf
        else:
            sign, log_b = -1.0, log_lii + math.log1p(-math.exp(log_p - log_lii))
        s = max(log_b, 0.5 * log_c)
        b = sign * math.exp(log_b - s)
        c = math.exp(log_c - 2.0 * s)
        disc = math.sqrt(b * b + 4.0 * c)
        if b > 0:
            out.append(math.log(2.0) + log_c - s - math.log(b + disc))
        else:
            out.append(s + math.log(0.5 * (disc - b)))
    return out


# experiment harnesses


@dataclass
class SlopeExperiment:
    rows: list
    fits: list
    config: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "n", "k", "log_marginal", "stderr", "F_n"])
        for r in self.rows:
            w.writerow(
                [r["replicate"], r["n"], r["k"], f"{r['log_marginal']:.16e}", f"{r['stderr']:.16e}", f"{r['F_n']:.16e}"]
            )
        return buf.getvalue()

    def fits_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replicate", "ell_hat", "intercept", "stderr"])
        for i, f in enumerate(self.fits):
            w.writerow([i, f"{f.ell_hat:.16e}", f"{f.intercept:.16e}", f"{f.stderr:.16e}"])
        return buf.getvalue()

    def mean_curve(self) -> list[tuple[int, float]]:
        ns = sorted({r["n"] for r in self.rows})
        return [(n, float(np.mean([r["F_n"] for r in self.rows if r["n"] == n]))) for n in ns]


def evidence_experiment(
    point: FactorModelPoint,
    k: int,
    n_grid=(50, 100, 200, 400, 800),
    replicates: int = 20,
    draws: int = 20_000,
    seed: int = 0,
    prior: PriorSpec | None = None,
    threads: int | None = 1,
    method: str = "smc",
) -> SlopeExperiment:
    """Per replicate: one data stream of ``max(n_grid)`` rows, ``S_n`` from its first ``n`` rows,
    an evidence estimate per ``n`` and a slope fit of ``F_n`` on ``log n``."""
    prior = prior or PriorSpec()
    n_grid = sorted(int(n) for n in n_grid)
    reps = np.random.SeedSequence(seed).spawn(replicates)

    def one(rep_index):
        data_seq, *ev_seqs = reps[rep_index].spawn(1 + len(n_grid))
        x = sample_observations(point, n_grid[-1], data_seq)
        rows = []
        for n, ev_seq in zip(n_grid, ev_seqs):
            s = SampleCovariance.from_data(x[:n])
            ev_seed = int(ev_seq.generate_state(1)[0])
            est = log_marginal_likelihood(s, k, prior, draws, ev_seed, method=method)
            rows.append(
                {
                    "replicate": rep_index,
                    "n": n,
                    "k": k,
                    "log_marginal": est.log_marginal,
                    "stderr": est.mc_stderr,
                    "F_n": watanabe_deviation(est, s),
                }
            )
        return rows, fit_learning_coefficient([(r["n"], r["F_n"]) for r in rows])

    nt = kernels._threads(threads)
    if nt == 1:
        results = [one(i) for i in range(replicates)]
    else:
        with ThreadPoolExecutor(nt) as pool:
            results = list(pool.map(one, range(replicates)))
    rows = [r for rs, _ in results for r in rs]
    fits = [f for _, f in results]
    config = {
        "sigma0": point.sigma0.tolist(),
        "k": k,
        "n_grid": n_grid,
        "replicates": replicates,
        "draws": draws,
        "seed": seed,
        "method": method,
        "prior": asdict(prior),
    }
    return SlopeExperiment(rows, fits, config)


@dataclass
class SbicExperiment:
    selections: dict
    loglik_rows: list
    config: dict

    def frequencies(self) -> dict:
        reps = self.config["replicates"]
        k_max = self.config["k_max"]
        return {
            crit: [sum(1 for c in picks if c == k) / reps for k in range(k_max + 1)]
            for crit, picks in self.selections.items()
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        k_max = self.config["k_max"]
        w.writerow(["criterion"] + [f"freq_k{k}" for k in range(k_max + 1)])
        for crit, freqs in self.frequencies().items():
            w.writerow([crit] + [f"{f:.16e}" for f in freqs])
        return buf.getvalue()


def sbic_experiment(
    p: int = 5,
    k_max: int = 2,
    true_r: int = 0,
    n: int = 200,
    replicates: int = 200,
    seed: int = 0,
    penalties=None,
    threads: int | None = 1,
) -> SbicExperiment:
    """Selection frequencies of BIC and sBIC with data from a generic point of ``M_true_r``.

    The true point has unit noise variances and, for ``true_r > 0``, loadings
    drawn once from the seed.
    """
    if not (0 <= true_r <= k_max <= p):
        raise ValueError("need 0 <= true_r <= k_max <= p")
    root = np.random.SeedSequence(seed)
    truth_seq, rep_root = root.spawn(2)
    lam = np.random.default_rng(truth_seq).normal(size=(p, true_r))
    point = FactorModelPoint.from_params(np.ones(p), lam, min_rank=true_r)
    if penalties is None:
        penalties = sbic_penalty_matrix(p, k_max)
    reps = rep_root.spawn(replicates)

    def one(i):
        s = SampleCovariance.from_data(sample_observations(point, n, reps[i]))
        lls = [max_log_likelihood(s, k, seed=i) for k in range(k_max + 1)]
        return lls

    nt = kernels._threads(threads)
    if nt == 1:
        all_lls = [one(i) for i in range(replicates)]
    else:
        with ThreadPoolExecutor(nt) as pool:
            all_lls = list(pool.map(one, range(replicates)))
    picks = {"BIC": [], "sBIC": []}
    rows = []
    for i, lls in enumerate(all_lls):
        bic = [bic_score(v, p, k, n) for k, v in enumerate(lls)]
        sbic = sbic_scores(lls, p, n, penalties)
        picks["BIC"].append(int(np.argmax(bic)))
        picks["sBIC"].append(int(np.argmax(sbic)))
        rows.append({"replicate": i, "logliks": lls, "bic": bic, "sbic": sbic})
    config = {
        "p": p,
        "k_max": k_max,
        "true_r": true_r,
        "n": n,
        "replicates": replicates,
        "seed": seed,
        "sigma0": point.sigma0.tolist(),
    }
    return SbicExperiment(picks, rows, config)
