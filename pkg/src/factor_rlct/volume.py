"""Monte Carlo level-set volumes of the fiber ideal and their scaling exponent.

For loadings drawn uniformly from the box ``[-R, R]^(p x k)``, the fraction
``V(eps)`` with fiber sum of squares below ``eps^2`` behaves like
``c * eps^lam * log(1/eps)^(m-1)`` as ``eps -> 0``, where ``(lam, m)`` is the
RLCT of the reduced fiber ideal.  The slope of ``log V`` against ``log eps``
therefore estimates ``lam``.

All thresholds are evaluated on one shared set of draws, so the fractions are
nested.  The fit is generalized least squares with the exact multinomial
covariance of nested proportions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .factor_model import FactorModelPoint

__all__ = [
    "VolumeConfig",
    "VolumeEstimate",
    "ExponentFit",
    "InsufficientDataError",
    "default_radius",
    "calibrate_grid",
    "estimate_levelset_volumes",
    "fit_exponent",
    "estimate_fiber_rlct",
]

MIN_SAMPLES = 10_000
BASE_RATIO = 10 ** -0.5
DEFAULT_SAMPLES = 6 * 10**7


class InsufficientDataError(ValueError):
    """Fewer than three usable thresholds for the exponent fit."""


@dataclass(frozen=True)
class VolumeConfig:
    box_radius: float
    eps_grid: tuple
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    threads: int | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_grid)
        object.__setattr__(self, "eps_grid", eps)
        if not self.box_radius > 0:
            raise ValueError("box_radius must be positive")
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("thresholds must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_grid must be strictly decreasing")
        if self.samples < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} samples, got {self.samples}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["eps_grid"] = list(self.eps_grid)
        return d


@dataclass(frozen=True)
class ExponentFit:
    ell_hat: float
    stderr: float
    chi2_dof: float
    used: tuple
    loglog_coef: float | None = None

    @property
    def mult_hint(self) -> float | None:
        """Diagnostic multiplicity ``1 + coefficient of log log(1/eps)``."""
        return None if self.loglog_coef is None else 1.0 + self.loglog_coef


@dataclass(frozen=True)
class VolumeEstimate:
    eps: tuple
    counts: tuple
    samples: int
    config: VolumeConfig | None = None
    fit: ExponentFit | None = None
    k: int | None = None
    p: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.eps) != len(self.counts):
            raise ValueError("eps and counts differ in length")
        if any(c < 0 or c > self.samples for c in self.counts):
            raise ValueError("counts must lie in [0, samples]")

    @property
    def fractions(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.samples

    @property
    def stderrs(self) -> np.ndarray:
        f = self.fractions
        return np.sqrt(f * (1.0 - f) / self.samples)

    @property
    def empty(self) -> tuple:
        """Thresholds whose count is zero; the fit drops them."""
        return tuple(e for e, c in zip(self.eps, self.counts) if c == 0)

    @property
    def learning_hat(self) -> float | None:
        if self.fit is None or self.p is None:
            return None
        return (self.fit.ell_hat + self.p) / 2.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "count", "samples", "fraction", "stderr"])
        for e, c, f, s in zip(self.eps, self.counts, self.fractions, self.stderrs):
            w.writerow([f"{e:.16e}", c, self.samples, f"{f:.16e}", f"{s:.16e}"])
        return buf.getvalue()

    def summary(self) -> dict:
        doc = {
            "p": self.p,
            "k": self.k,
            "samples": self.samples,
            "empty_eps": list(self.empty),
            "backend": kernels.BACKEND,
        }
        if self.fit is not None:
            doc.update(
                ell_hat=self.fit.ell_hat,
                stderr=self.fit.stderr,
                chi2_dof=self.fit.chi2_dof,
                learning_hat=self.learning_hat,
                learning_stderr=self.fit.stderr / 2.0,
            )
            if self.fit.loglog_coef is not None:
                doc["mult_hint"] = self.fit.mult_hint
        if self.config is not None:
            doc["config"] = self.config.to_json()
        doc.update(self.extra)
        return doc

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2) + "\n"


def default_radius(point: FactorModelPoint) -> float:
    """``2 sqrt(max_i sigma_ii)``; the box then contains every real fiber point."""
    return 2.0 * math.sqrt(float(np.max(np.diag(point.sigma0))))


def calibrate_grid(
    point: FactorModelPoint,
    k: int,
    radius: float,
    samples: int,
    *,
    num_eps: int = 6,
    top_fraction: float = 0.001,
    min_count: int = 400,
    pilot_samples: int = 4 * 10**6,
    seed: int = 0,
) -> tuple[float, ...]:
    """Geometric threshold grid for the main run.

    The largest threshold puts about ``top_fraction`` of the box below it.  The
    ratio is ``10^-1/2`` unless that would leave fewer than ``min_count``
    expected hits at the smallest threshold; then it is compressed using the
    exponent suggested by a pilot run.
    """
    key = kernels.counter_key(seed, 1)
    n = max(pilot_samples, MIN_SAMPLES)
    sos = np.concatenate(
        [
            kernels.sos_batch(point.sigma0, k, radius, key, s, min(kernels.CHUNK, n - s))
            for s in range(0, n, kernels.CHUNK)
        ]
    )
    sos.sort()
    low_fraction = max(top_fraction / 30.0, 50.0 / n)
    q_top = sos[int(top_fraction * n)]
    q_low = sos[int(low_fraction * n)]
    eps_top = math.sqrt(q_top)
    ratio = BASE_RATIO
    if q_low > 0 and q_top > q_low:
        lam = 2.0 * math.log(top_fraction / low_fraction) / math.log(q_top / q_low)
        target = min_count / samples
        if target < top_fraction:
            needed = (target / top_fraction) ** (1.0 / (lam * (num_eps - 1)))
            ratio = max(BASE_RATIO, min(needed, 0.9))
        else:
            ratio = 0.9
    return tuple(eps_top * ratio**i for i in range(num_eps))


def estimate_levelset_volumes(point: FactorModelPoint, k: int, cfg: VolumeConfig) -> VolumeEstimate:
    """Counts of draws with fiber sum of squares below each ``eps^2``; deterministic per seed."""
    if not (1 <= k <= point.p):
        raise ValueError(f"need 1 <= k <= p, got k={k}")
    key = kernels.counter_key(cfg.seed, 0)
    thresholds = [e * e for e in cfg.eps_grid]
    counts = kernels.count_below_many(
        point.sigma0, k, cfg.box_radius, key, cfg.samples, thresholds, threads=cfg.threads
    )
    return VolumeEstimate(
        eps=cfg.eps_grid,
        counts=tuple(int(c) for c in counts),
        samples=cfg.samples,
        config=cfg,
        k=k,
        p=point.p,
    )


def _nested_cov(f: np.ndarray, samples: int) -> np.ndarray:
    # Cov(log f_i, log f_j) = (1 - f_a) / (N f_a), a = the larger threshold of i, j
    idx = np.arange(len(f))
    a = np.minimum.outer(idx, idx)
    return (1.0 - f[a]) / (samples * f[a])


def fit_exponent(estimate: VolumeEstimate, use_loglog_correction: bool = False) -> ExponentFit:
    """GLS slope of ``log V`` on ``log eps`` (optionally also on ``log log(1/eps)``).

    Thresholds with zero hits, or with every draw below them, are dropped.
    The slope's standard error is inflated by ``sqrt(chi2/dof)`` when the
    points scatter more than the counting noise explains.
    """
    eps = np.asarray(estimate.eps, dtype=float)
    f = estimate.fractions
    use = (f > 0) & (f < 1)
    n_par = 3 if use_loglog_correction else 2
    if np.count_nonzero(use) < max(3, n_par):
        raise InsufficientDataError(
            f"only {np.count_nonzero(use)} usable thresholds; need at least {max(3, n_par)}"
        )
    eps, f = eps[use], f[use]
    cols = [np.ones_like(eps), np.log(eps)]
    if use_loglog_correction:
        if np.any(eps >= 1):
            raise ValueError("the log log(1/eps) regressor needs every eps < 1")
        cols.append(np.log(np.log(1.0 / eps)))
    X = np.column_stack(cols)
    y = np.log(f)
    cov = _nested_cov(f, estimate.samples)
    chol = np.linalg.cholesky(cov)
    Xw = np.linalg.solve(chol, X)
    yw = np.linalg.solve(chol, y)
    beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = yw - Xw @ beta
    dof = len(y) - n_par
    chi2_dof = float(resid @ resid / dof) if dof > 0 else 0.0
    xtx_inv = np.linalg.inv(Xw.T @ Xw)
    stderr = math.sqrt(xtx_inv[1, 1] * max(1.0, chi2_dof))
    return ExponentFit(
        ell_hat=float(beta[1]),
        stderr=stderr,
        chi2_dof=chi2_dof,
        used=tuple(float(e) for e in eps),
        loglog_coef=float(beta[2]) if use_loglog_correction else None,
    )


def estimate_fiber_rlct(
    point: FactorModelPoint,
    k: int,
    cfg: VolumeConfig | None = None,
    *,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    radius: float | None = None,
    threads: int | None = None,
    use_loglog_correction: bool = False,
) -> VolumeEstimate:
    """Volume run plus exponent fit.

    ``result.fit.ell_hat`` estimates the fiber RLCT and ``result.learning_hat``
    the learning coefficient ``(ell + p) / 2``.  Without ``cfg`` the radius
    defaults to :func:`default_radius` and the grid is calibrated by a pilot.
    """
    if cfg is None:
        r = default_radius(point) if radius is None else radius
        grid = calibrate_grid(point, k, r, samples, seed=seed)
        cfg = VolumeConfig(r, grid, samples, seed, threads)
    est = estimate_levelset_volumes(point, k, cfg)
    fit = fit_exponent(est, use_loglog_correction)
    return VolumeEstimate(est.eps, est.counts, est.samples, cfg, fit, k, point.p)
