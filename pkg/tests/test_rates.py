from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfcrate.rates import bootstrap_ci, fit_with_ci, loglog_fit


def test_exact_power_law():
    fit = loglog_fit([(1, 1.0), (10, 0.1), (100, 0.01)])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.ci_lo <= fit.slope <= fit.ci_hi


def test_constant_values_have_zero_slope():
    fit = loglog_fit([(1, 3.0), (10, 3.0), (100, 3.0)])
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("points", [[(2, 8.0), (4, 1.0)], [(1, 1.0), (2, 0.0), (3, 1.0)],
                                    [(1, 1.0), (1, 2.0), (3, 1.0)]])
def test_invalid_points_raise(points):
    with pytest.raises(ValueError):
        loglog_fit(points)


def test_zero_stderr_collapses_interval():
    lo, hi = bootstrap_ci([(1, 1.0, 0.0), (10, 0.1, 0.0), (100, 0.01, 0.0)], resamples=200, seed=1)
    assert lo == pytest.approx(-1.0, abs=1e-12)
    assert hi == pytest.approx(-1.0, abs=1e-12)


def test_too_few_resamples():
    with pytest.raises(ValueError):
        bootstrap_ci([(1, 1.0, 0.1), (10, 0.1, 0.01), (100, 0.01, 0.001)], resamples=10, seed=1)


def test_bootstrap_is_deterministic_per_seed():
    pts = [(10, 0.3, 0.01), (100, 0.1, 0.005), (1000, 0.03, 0.002)]
    assert bootstrap_ci(pts, 500, 7) == bootstrap_ci(pts, 500, 7)
    assert bootstrap_ci(pts, 500, 7) != bootstrap_ci(pts, 500, 8)


def test_bootstrap_coverage():
    # meta-replication: noisy observations of an exact power law with known stderr
    rng = np.random.default_rng(2024)
    ns = np.array([10.0, 100.0, 1000.0, 10000.0])
    truth = 2.0 * ns ** -0.5
    se = 0.02 * truth
    hits = 0
    reps = 300
    for r in range(reps):
        obs = truth + se * rng.standard_normal(len(ns))
        lo, hi = bootstrap_ci(list(zip(ns, obs, se)), resamples=400, seed=r)
        hits += lo <= -0.5 <= hi
    assert hits / reps >= 0.93


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100.0), st.floats(0.5, 50.0), st.floats(-2.0, 2.0))
def test_scale_invariance_and_equivariance(c, n_scale, slope):
    ns = np.array([1.0, 3.0, 10.0, 40.0])
    vals = np.exp(0.3 * np.sin(ns)) * ns ** slope
    base = loglog_fit(list(zip(ns, vals)))
    scaled = loglog_fit(list(zip(ns, c * vals)))
    shifted = loglog_fit(list(zip(n_scale * ns, vals)))
    assert scaled.slope == pytest.approx(base.slope, abs=1e-9)
    assert scaled.intercept == pytest.approx(base.intercept + np.log(c), abs=1e-9)
    assert shifted.slope == pytest.approx(base.slope, abs=1e-9)
    assert 0.0 <= base.r_squared <= 1.0 + 1e-12


def test_fit_with_ci_contains_slope():
    fit = fit_with_ci([(10, 0.3, 0.02), (100, 0.1, 0.01), (1000, 0.03, 0.003)], resamples=500, seed=3)
    assert fit.ci_lo <= fit.slope <= fit.ci_hi
