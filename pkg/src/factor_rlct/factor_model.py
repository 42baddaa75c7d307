"""Gaussian factor analysis model ``Sigma = diag(psi) + Lambda Lambda^T``.

Parametrization, dimension counts, the Gaussian negative log-likelihood,
data simulation, the reduced fiber ideal (off-diagonal constraints only) and
the one-factor stratum classification.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FactorParams",
    "FactorModelPoint",
    "SampleCovariance",
    "Stratum",
    "NotPositiveDefiniteError",
    "parametrize",
    "model_dimension",
    "neg_log_lik",
    "min_neg_log_lik",
    "sample_observations",
    "sample_data",
    "fiber_sos",
    "classify_one_factor",
    "torus_rescale",
    "max_log_likelihood",
    "scenario",
    "SCENARIOS",
    "read_covariance",
    "write_covariance_csv",
    "point_to_json",
]

SYM_RTOL = 1e-12
LOG_2PI = math.log(2 * math.pi)


class NotPositiveDefiniteError(ValueError):
    pass


def _cholesky(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("matrix is not positive definite") from None


def _check_symmetric(a: np.ndarray, what: str) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1e-300)
    if np.max(np.abs(a - a.T)) > SYM_RTOL * scale:
        raise ValueError(f"{what} is not symmetric")


@dataclass(frozen=True)
class FactorParams:
    """Noise variances ``psi`` (length p) and loadings ``lam`` (p x k)."""

    psi: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim == 1:
            lam = lam[:, None]
        if psi.ndim != 1 or lam.ndim != 2 or lam.shape[0] != psi.shape[0]:
            raise ValueError(f"inconsistent shapes psi {psi.shape}, lambda {lam.shape}")
        if not np.all(psi > 0):
            raise ValueError("all noise variances must be positive")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "lam", lam)

    @property
    def p(self) -> int:
        return self.psi.shape[0]

    @property
    def k(self) -> int:
        return self.lam.shape[1]


def parametrize(params: FactorParams) -> np.ndarray:
    return np.diag(params.psi) + params.lam @ params.lam.T


@dataclass(frozen=True)
class FactorModelPoint:
    """A true covariance matrix, optionally with the parameters that built it.

    ``min_rank`` is the smallest rank of a loading matrix reproducing
    ``sigma0``; it is carried along from construction, never inferred.
    """

    sigma0: np.ndarray
    provenance: FactorParams | None = None
    min_rank: int | None = None

    def __post_init__(self):
        s = np.array(self.sigma0, dtype=float)
        _check_symmetric(s, "sigma0")
        _cholesky(s)
        if self.provenance is not None:
            built = parametrize(self.provenance)
            if built.shape != s.shape:
                raise ValueError("provenance has the wrong dimension")
            scale = max(np.max(np.abs(s)), 1.0)
            if np.max(np.abs(built - s)) > SYM_RTOL * scale:
                raise ValueError("sigma0 does not match its provenance")
            if self.min_rank is not None:
                lam = self.provenance.lam
                rank = np.linalg.matrix_rank(lam) if lam.size else 0
                if self.min_rank > rank:
                    raise ValueError("min_rank exceeds the rank of the provenance loadings")
        if self.min_rank is not None and self.min_rank < 0:
            raise ValueError("min_rank must be non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "sigma0", s)

    @classmethod
    def from_params(cls, psi, lam, min_rank: int | None = None) -> "FactorModelPoint":
        params = FactorParams(psi, lam)
        return cls(parametrize(params), params, min_rank)

    @property
    def p(self) -> int:
        return self.sigma0.shape[0]


@dataclass(frozen=True)
class SampleCovariance:
    """``S_n = X^T X / n`` for centred observations ``X`` (n x p)."""

    s: np.ndarray
    n: int

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        _check_symmetric(s, "sample covariance")
        if np.linalg.eigvalsh(s).min() < -1e-10 * max(1.0, np.abs(s).max()):
            raise ValueError("sample covariance is not positive semidefinite")
        if self.n < 0:
            raise ValueError("sample size must be non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @classmethod
    def from_data(cls, x: np.ndarray) -> "SampleCovariance":
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        s = x.T @ x / n
        return cls(0.5 * (s + s.T), n)

    @property
    def p(self) -> int:
        return self.s.shape[0]


def model_dimension(p: int, k: int) -> tuple[int, int]:
    """Parameter-count dimension ``d_k`` and its cap at ``p(p+1)/2``."""
    if not (0 <= k <= p):
        raise ValueError(f"need 0 <= k <= p, got p={p}, k={k}")
    d = (k + 1) * p - k * (k - 1) // 2
    return d, min(d, p * (p + 1) // 2)


def neg_log_lik(sigma, s: SampleCovariance) -> float:
    """``p/2 log 2pi + 1/2 log det Sigma + 1/2 tr(Sigma^-1 S_n)``."""
    sigma = np.asarray(sigma, dtype=float)
    chol = _cholesky(sigma)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    w = np.linalg.solve(chol, s.s)
    tr = np.trace(np.linalg.solve(chol, w.T))
    return 0.5 * sigma.shape[0] * LOG_2PI + 0.5 * logdet + 0.5 * tr


def min_neg_log_lik(s: SampleCovariance) -> float:
    sign, logdet = np.linalg.slogdet(s.s)
    if sign <= 0:
        raise NotPositiveDefiniteError("sample covariance is singular")
    p = s.p
    return 0.5 * p * LOG_2PI + 0.5 * logdet + 0.5 * p


def sample_observations(point: FactorModelPoint, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws from ``N(0, sigma0)`` as an ``(n, p)`` array."""
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(point.sigma0)
    return rng.standard_normal((n, point.p)) @ chol.T


def sample_data(point: FactorModelPoint, n: int, seed) -> SampleCovariance:
    if n < point.p + 1:
        warnings.warn(
            f"n={n} < p+1={point.p + 1}: the sample covariance is singular",
            stacklevel=2,
        )
    return SampleCovariance.from_data(sample_observations(point, n, seed))


def fiber_sos(point: FactorModelPoint, lam) -> np.ndarray | float:
    """Sum of squares of the reduced fiber generators ``lam_i . lam_j - sigma_ij``.

    ``lam`` may be a single ``(p, k)`` matrix or a batch ``(N, p, k)``.
    """
    lam = np.asarray(lam, dtype=float)
    single = lam.ndim == 2
    if single:
        lam = lam[None]
    p = point.p
    if lam.shape[1] != p:
        raise ValueError(f"loadings have {lam.shape[1]} rows, expected {p}")
    gram = np.einsum("nil,njl->nij", lam, lam)
    iu = np.triu_indices(p, 1)
    g = gram[:, iu[0], iu[1]] - point.sigma0[iu]
    out = np.sum(g * g, axis=1)
    return float(out[0]) if single else out


class Stratum(enum.Enum):
    GENERIC_A = "a"
    TWO_NONZERO_B = "b"
    DIAGONAL_C = "c"


def classify_one_factor(point: FactorModelPoint, tol: float = 1e-9) -> Stratum:
    """Stratum of a one-factor point from the non-zero count of its loadings."""
    prov = point.provenance
    if prov is None:
        raise ValueError("classification needs the generating loadings (provenance)")
    if prov.k != 1:
        raise ValueError(f"classification is for one-factor points, got k={prov.k}")
    count = int(np.sum(np.abs(prov.lam[:, 0]) > tol))
    if count >= 3:
        return Stratum.GENERIC_A
    if count == 2:
        return Stratum.TWO_NONZERO_B
    return Stratum.DIAGONAL_C


def torus_rescale(point: FactorModelPoint, gamma) -> FactorModelPoint:
    """The point ``Gamma sigma0 Gamma`` for ``Gamma = diag(gamma)``."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (point.p,):
        raise ValueError(f"gamma must have length {point.p}")
    if np.any(gamma == 0):
        raise ValueError("gamma entries must be non-zero")
    sigma = gamma[:, None] * point.sigma0 * gamma[None, :]
    prov = None
    if point.provenance is not None:
        prov = FactorParams(gamma**2 * point.provenance.psi, gamma[:, None] * point.provenance.lam)
        sigma = parametrize(prov)
    return FactorModelPoint(sigma, prov, point.min_rank)


def max_log_likelihood(s: SampleCovariance, k: int, n_starts: int = 4, seed=0) -> float:
    """Maximized Gaussian log-likelihood ``-n min ell(Sigma_k | S_n)`` of the k-factor model.

    Plain multi-start L-BFGS on ``(log psi, Lambda)``; enough for
    model-selection experiments, not a general factor-analysis fitter.
    """
    from scipy.optimize import minimize

    p, n = s.p, s.n
    if not (0 <= k <= p):
        raise ValueError(f"need 0 <= k <= p, got k={k}")
    S = s.s
    if k == 0:
        psi = np.diag(S).copy()
        return -n * (0.5 * p * LOG_2PI + 0.5 * np.sum(np.log(psi)) + 0.5 * p)

    def objective(theta):
        psi = np.exp(theta[:p])
        lam = theta[p:].reshape(p, k)
        sigma = np.diag(psi) + lam @ lam.T
        try:
            chol = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(theta)
        inv = np.linalg.inv(sigma)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        val = 0.5 * logdet + 0.5 * np.sum(inv * S)
        g = 0.5 * (inv - inv @ S @ inv)
        grad = np.concatenate([np.diag(g) * psi, (2.0 * g @ lam).ravel()])
        return val, grad

    rng = np.random.default_rng(seed)
    diag = np.diag(S)
    best = np.inf
    for start in range(n_starts):
        lam0 = rng.standard_normal((p, k)) * np.sqrt(diag)[:, None] * (0.5 if start else 0.3)
        psi0 = np.maximum(diag - np.sum(lam0**2, axis=1), 0.1 * diag)
        theta0 = np.concatenate([np.log(psi0), lam0.ravel()])
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B")
        best = min(best, res.fun)
    return -n * (0.5 * p * LOG_2PI + best)


# built-in three-variable one-factor scenarios, one per stratum
SCENARIOS = {
    "diag3": ([1.0, 1.0, 1.0], [0.0, 0.0, 0.0], 0),
    "two3": ([1.0, 1.0, 1.0], [1.0, 1.0, 0.0], 1),
    "generic3": ([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], 1),
}


def scenario(name: str) -> FactorModelPoint:
    try:
        psi, lam, r = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return FactorModelPoint.from_params(psi, np.array(lam)[:, None], min_rank=r)


def point_to_json(point: FactorModelPoint) -> dict:
    doc = {"p": point.p, "sigma": point.sigma0.tolist()}
    if point.provenance is not None:
        doc["provenance"] = {
            "psi": point.provenance.psi.tolist(),
            "lambda": point.provenance.lam.tolist(),
        }
    if point.min_rank is not None:
        doc["min_rank"] = point.min_rank
    return doc


def _point_from_json(doc: dict) -> FactorModelPoint:
    sigma = np.asarray(doc["sigma"], dtype=float)
    if "p" in doc and sigma.shape != (doc["p"], doc["p"]):
        raise ValueError(f"sigma has shape {sigma.shape}, expected p={doc['p']}")
    prov = doc.get("provenance")
    params = FactorParams(prov["psi"], prov["lambda"]) if prov else None
    return FactorModelPoint(sigma, params, doc.get("min_rank"))


def read_covariance(path) -> FactorModelPoint:
    """Read a covariance matrix from JSON (``{p, sigma, provenance?}``) or header-free CSV."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return _point_from_json(json.loads(text))
    rows = [[float(v) for v in row] for row in csv.reader(io.StringIO(text)) if row]
    return FactorModelPoint(np.array(rows))


def write_covariance_csv(point: FactorModelPoint, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for row in point.sigma0:
            w.writerow([repr(float(v)) for v in row])
