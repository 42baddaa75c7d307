import json
import math

import numpy as np
import pytest

from factor_rlct import kernels
from factor_rlct.factor_model import FactorModelPoint, scenario
from factor_rlct.volume import (
    InsufficientDataError,
    VolumeConfig,
    VolumeEstimate,
    calibrate_grid,
    default_radius,
    estimate_fiber_rlct,
    estimate_levelset_volumes,
    fit_exponent,
)


def test_config_validation():
    with pytest.raises(ValueError):
        VolumeConfig(0.0, (0.1,))
    with pytest.raises(ValueError):
        VolumeConfig(1.0, (0.1, 0.2))
    with pytest.raises(ValueError):
        VolumeConfig(1.0, (0.1, -0.01))
    with pytest.raises(ValueError):
        VolumeConfig(1.0, (0.1,), samples=9_999)
    assert VolumeConfig(1.0, [0.2, 0.1], 10_000).eps_grid == (0.2, 0.1)


def test_large_threshold_gives_full_box():
    r = 2.0
    eps = math.sqrt(3 * (3 * r * r) ** 2) * 1.01
    est = estimate_levelset_volumes(FactorModelPoint(np.eye(3)), 1, VolumeConfig(r, (eps,), 20_000, threads=1))
    assert est.fractions[0] == 1.0


def test_fractions_monotone_and_deterministic():
    cfg = VolumeConfig(2.0, (1.0, 0.3, 0.1, 0.03), 200_000, seed=7, threads=2)
    point = scenario("diag3")
    a = estimate_levelset_volumes(point, 1, cfg)
    b = estimate_levelset_volumes(point, 1, VolumeConfig(2.0, (1.0, 0.3, 0.1, 0.03), 200_000, seed=7, threads=1))
    assert a.counts == b.counts
    assert np.all(np.diff(a.fractions) <= 0)
    assert np.all((a.fractions >= 0) & (a.fractions <= 1))
    c = estimate_levelset_volumes(point, 1, VolumeConfig(2.0, (1.0, 0.3, 0.1, 0.03), 200_000, seed=8))
    assert c.counts != a.counts


def test_synthetic_power_law_exact():
    eps = (0.1, 0.05, 0.02, 0.01)
    n = 10**8
    est = VolumeEstimate(eps, tuple(round(n * e * e) for e in eps), n)
    fit = fit_exponent(est)
    assert fit.ell_hat == pytest.approx(2.0, abs=1e-12)
    assert fit.chi2_dof == pytest.approx(0.0, abs=1e-12)


def test_synthetic_loglog_correction():
    eps = tuple(10 ** (-0.5 * i) for i in range(1, 9))
    n = 10**15
    est = VolumeEstimate(eps, tuple(round(n * e**1.5 * math.log(1 / e)) for e in eps), n)
    plain = fit_exponent(est)
    fit = fit_exponent(est, use_loglog_correction=True)
    assert abs(plain.ell_hat - 1.5) > 0.1
    assert fit.ell_hat == pytest.approx(1.5, abs=1e-6)
    assert fit.mult_hint == pytest.approx(2.0, abs=1e-5)


def test_fit_needs_three_points():
    est = VolumeEstimate((0.3, 0.1, 0.03, 0.01), (5000, 300, 0, 0), 100_000)
    assert est.empty == (0.03, 0.01)
    with pytest.raises(InsufficientDataError):
        fit_exponent(est)
    with pytest.raises(ValueError):
        fit_exponent(VolumeEstimate((2.0, 1.0, 0.5), (9, 5, 2), 10), use_loglog_correction=True)


def test_csv_and_summary():
    cfg = VolumeConfig(2.0, (0.5, 0.2, 0.1), 50_000, seed=1, threads=1)
    est = estimate_fiber_rlct(scenario("diag3"), 1, cfg)
    lines = est.to_csv().strip().splitlines()
    assert lines[0] == "epsilon,count,samples,fraction,stderr"
    assert len(lines) == 4
    doc = json.loads(est.summary_json())
    assert doc["ell_hat"] == pytest.approx(est.fit.ell_hat)
    assert doc["config"]["eps_grid"] == list(cfg.eps_grid)
    assert est.learning_hat == pytest.approx((est.fit.ell_hat + 3) / 2)


def test_calibrated_grid_shape():
    point = scenario("generic3")
    grid = calibrate_grid(point, 1, default_radius(point), 10**7, pilot_samples=10**6)
    assert len(grid) == 6 and all(a > b for a, b in zip(grid, grid[1:]))
    ratio = grid[1] / grid[0]
    assert all(b / a == pytest.approx(ratio) for a, b in zip(grid, grid[1:]))
    assert 10**-0.5 - 1e-12 <= ratio < 1


def test_default_radius():
    assert default_radius(FactorModelPoint(np.diag([4.0, 1.0, 1.0]))) == 4.0


def test_fraction_ratio_example():
    # I_3, k=1, R=2: V(0.1)/V(0.01) against 10^1.5 within 3 standard errors at 1e7 draws.
    key = kernels.counter_key(0, 0)
    c = kernels.count_below_many(np.eye(3), 1, 2.0, key, 10**7, [0.01, 0.0001])
    ratio = c[0] / c[1]
    se = ratio * math.sqrt(1 / c[1] - 1 / c[0])
    assert abs(ratio - 10**1.5) < 3 * se, f"ratio {ratio:.2f} +- {se:.2f}"


@pytest.mark.slow
def test_diag_pipeline_in_range():
    est = estimate_fiber_rlct(scenario("diag3"), 1, samples=10**7, seed=3)
    assert 1.3 <= est.fit.ell_hat <= 1.7
