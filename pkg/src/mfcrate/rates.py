"""Log-log rate fits with parametric bootstrap intervals."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Optional, Sequence

import numpy as np

from .rng import make_rng


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    ci_lo: float
    ci_hi: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check_points(ns, values) -> tuple[np.ndarray, np.ndarray]:
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    if ns.shape != values.shape or ns.ndim != 1:
        raise ValueError("need matching 1D sequences of n and values")
    if len(ns) < 3:
        raise ValueError(f"need at least 3 points, got {len(ns)}")
    if np.any(values <= 0):
        raise ValueError("values must be positive for a log-log fit")
    if np.any(ns <= 0) or np.any(np.diff(ns) <= 0):
        raise ValueError("n must be positive and strictly increasing")
    return ns, values


def _ols(lx: np.ndarray, ly: np.ndarray) -> tuple[float, float, float]:
    mx, my = lx.mean(), ly.mean()
    sxx = np.sum((lx - mx) ** 2)
    slope = float(np.sum((lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    ss_tot = float(np.sum((ly - my) ** 2))
    ss_res = float(np.sum((ly - intercept - slope * lx) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return slope, intercept, r2


def loglog_fit(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least squares of ``log value`` on ``log n``; the CI fields equal the slope."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points, got {len(pts)}")
    ns, values = _check_points([p[0] for p in pts], [p[1] for p in pts])
    slope, intercept, r2 = _ols(np.log(ns), np.log(values))
    return RateFit(slope, intercept, r2, slope, slope)


def bootstrap_ci(points: Sequence[tuple[float, float, float]], resamples: int = 2000, seed: int = 0,
                 level: float = 0.95) -> tuple[float, float]:
    """Percentile interval of the slope under Gaussian noise at each point's stderr.

    ``points`` are ``(n, value, stderr)``; resampled values are floored at a tiny
    positive fraction of the point value so the log stays defined.
    """
    if resamples < 200:
        raise ValueError("resamples must be >= 200")
    pts = list(points)
    ns, values = _check_points([p[0] for p in pts], [p[1] for p in pts])
    se = np.asarray([p[2] for p in pts], dtype=float)
    if np.any(se < 0):
        raise ValueError("standard errors must be nonnegative")
    rng = make_rng(seed, 0)
    draws = values[None, :] + se[None, :] * rng.standard_normal((resamples, len(ns)))
    draws = np.maximum(draws, 1e-12 * values[None, :])
    lx = np.log(ns)
    mx = lx.mean()
    ly = np.log(draws)
    slopes = ((lx - mx)[None, :] * (ly - ly.mean(axis=1, keepdims=True))).sum(axis=1) / np.sum((lx - mx) ** 2)
    point_slope = _ols(lx, np.log(values))[0]
    alpha = (1 - level) / 2
    lo, hi = np.quantile(slopes, [alpha, 1 - alpha])
    return float(min(lo, point_slope)), float(max(hi, point_slope))


def fit_with_ci(points: Sequence[tuple[float, float, float]], resamples: int = 2000, seed: int = 0) -> RateFit:
    base = loglog_fit([(n, v) for n, v, _ in points])
    lo, hi = bootstrap_ci(points, resamples, seed)
    return RateFit(base.slope, base.intercept, base.r_squared, lo, hi)
