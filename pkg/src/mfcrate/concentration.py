"""Monte Carlo experiments on how fast empirical measures of diffusing particles
approach their exact mixture law.

The exact law of ``Y_h = y_0 + alpha h + sqrt(2h) Z`` started from an empirical
initial condition is the Gaussian mixture ``m^N_{y_0} * N(alpha h, 2h I)``, so no
PDE error enters the W1 comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .measures import (EmpiricalMeasure, GaussianMixture, Measure, moment, pushforward_shift, sample,
                       w1_assignment, w1_exact_1d)
from .rates import RateFit, fit_with_ci
from .rng import make_rng


@dataclass
class ConcentrationConfig:
    dim_d: int
    n_particles: int
    drift_alpha: Sequence[float]
    horizon_h: float
    trials: int
    seed: int
    initial_points: Optional[EmpiricalMeasure] = None

    def __post_init__(self):
        if self.dim_d not in (1, 2):
            raise ValueError("only d = 1 and d = 2 are supported")
        if self.trials < 30:
            raise ValueError("trials must be >= 30")
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not self.horizon_h >= 0:
            raise ValueError("horizon_h must be nonnegative")
        alpha = np.broadcast_to(np.asarray(self.drift_alpha, dtype=float), (self.dim_d,)).copy()
        self.drift_alpha = alpha
        if self.initial_points is None:
            pts = make_rng(self.seed, 1 << 20).standard_normal((self.n_particles, self.dim_d))
            self.initial_points = EmpiricalMeasure(pts)
        if self.initial_points.size != self.n_particles or self.initial_points.dim != self.dim_d:
            raise ValueError("initial_points must hold n_particles points of dimension dim_d")


@dataclass
class W1Row:
    d: int
    N: int
    h: float
    trial_count: int
    mean_w1: float
    stderr: float

    def as_tuple(self) -> tuple:
        return (self.d, self.N, self.h, self.trial_count, self.mean_w1, self.stderr)


CSV_HEADER = ("d", "N", "h", "trial_count", "mean_w1", "stderr")


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    # np.sum uses pairwise summation, so the result is order-fixed
    mean = float(np.sum(values) / len(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, se


def _trial_w1(law: GaussianMixture, particles: np.ndarray, d: int, seed: int, stream: int) -> float:
    cloud = EmpiricalMeasure(particles)
    if d == 1:
        return w1_exact_1d(law, cloud)
    # proxy: equal-size assignment against an independent sample of the law
    return w1_assignment(sample(law, len(particles), seed, stream), cloud)


def single_group_trials(cfg: ConcentrationConfig, h: float, stream_base: int = 0) -> np.ndarray:
    """W1(m(h), m^N_{Y_h}) for each trial at one horizon ``h``."""
    y0 = cfg.initial_points.points
    N, d = y0.shape
    if h == 0:
        return np.zeros(cfg.trials)
    law = GaussianMixture(y0, 2 * h, cfg.drift_alpha * h)
    out = np.empty(cfg.trials)
    for t in range(cfg.trials):
        z = make_rng(cfg.seed, stream_base + 2 * t).standard_normal((N, d))
        Y = y0 + cfg.drift_alpha * h + math.sqrt(2 * h) * z
        out[t] = _trial_w1(law, Y, d, cfg.seed, stream_base + 2 * t + 1)
    return out


def h_grid(horizon: float, levels: int) -> list[float]:
    return [horizon * 2.0 ** -k for k in range(levels)]


def run_single_group(cfg: ConcentrationConfig, h_list: Optional[Sequence[float]] = None,
                     levels: int = 4) -> list[W1Row]:
    """Per-h table of mean W1 and its standard error."""
    hs = h_grid(cfg.horizon_h, levels) if h_list is None else list(h_list)
    rows = []
    for h in hs:
        mean, se = _mean_se(single_group_trials(cfg, h))
        rows.append(W1Row(cfg.dim_d, cfg.n_particles, float(h), cfg.trials, mean, se))
    return rows


@dataclass
class NRateResult:
    rows: list[W1Row]
    fit: RateFit

    def to_dict(self) -> dict:
        return {"rows": [dict(zip(CSV_HEADER, r.as_tuple())) for r in self.rows], "fit": self.fit.to_dict()}


def rate_in_particles(n_list: Sequence[int], h: float, trials: int, seed: int, alpha=0.0,
                      resamples: int = 1000) -> NRateResult:
    """Mean W1(m(h), m^N_{Y_h}) against N in d = 1, with standard normal initial clouds."""
    rows = []
    for N in n_list:
        cfg = ConcentrationConfig(1, int(N), [alpha], h, trials, seed)
        rows.extend(run_single_group(cfg, [h]))
    pts = [(r.N, r.mean_w1, r.stderr) for r in rows]
    return NRateResult(rows, fit_with_ci(pts, resamples=resamples, seed=seed))


def power_bound_check(rows: Sequence[W1Row], second_moments: Sequence[float], exponent: float = 1 / 6) -> dict:
    """Calibrate ``C`` on the first row so that ``mean <= C (1 + sqrt(M2)) (h/N)^exponent``
    holds with equality there, then test the remaining rows with ``C`` fixed."""
    shape = [(1 + math.sqrt(m2)) * (r.h / r.N) ** exponent for r, m2 in zip(rows, second_moments)]
    c_hat = rows[0].mean_w1 / shape[0]
    ratios = [r.mean_w1 / (c_hat * s) for r, s in zip(rows, shape)]
    return {"c_hat": c_hat, "ratios": ratios, "passed": bool(all(q <= 1 + 1e-12 for q in ratios))}


# --- grouped particles --------------------------------------------------------------------


@dataclass
class ParticleGroup:
    drift: Sequence[float]
    initial_points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.initial_points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) < 1:
            raise ValueError("group sizes must be >= 1")
        self.initial_points = pts
        self.drift = np.broadcast_to(np.asarray(self.drift, dtype=float), (pts.shape[1],)).copy()

    @property
    def size(self) -> int:
        return len(self.initial_points)


@dataclass
class GroupedConfig:
    groups: list[ParticleGroup]

    def __post_init__(self):
        if not self.groups:
            raise ValueError("at least one group is required")
        dims = {g.initial_points.shape[1] for g in self.groups}
        if dims != {1}:
            raise ValueError("grouped experiments are one-dimensional")

    @property
    def total(self) -> int:
        return sum(g.size for g in self.groups)


@dataclass
class GroupedResult:
    aggregate: np.ndarray
    per_group: np.ndarray  # (trials, J)
    weighted_sum: np.ndarray
    subadditivity_violation: float
    offset_aggregate: Optional[np.ndarray] = None
    offset_cloud_distance: Optional[np.ndarray] = None

    @property
    def aggregate_mean(self) -> float:
        return _mean_se(self.aggregate)[0]

    @property
    def per_group_means(self) -> list[float]:
        return [_mean_se(self.per_group[:, j])[0] for j in range(self.per_group.shape[1])]

    def to_dict(self) -> dict:
        out = {"aggregate_mean": self.aggregate_mean, "per_group_means": self.per_group_means,
               "weighted_sum_mean": _mean_se(self.weighted_sum)[0],
               "subadditivity_violation": self.subadditivity_violation}
        if self.offset_aggregate is not None:
            out["offset_aggregate_mean"] = _mean_se(self.offset_aggregate)[0]
            out["offset_cloud_distance_max"] = float(np.max(self.offset_cloud_distance))
        return out


def run_grouped(cfg: GroupedConfig, h: float, trials: int, seed: int, offsets=None) -> GroupedResult:
    """Aggregate W1 between ``N^{-1} sum n_j m^j(h)`` and the pooled empirical measure.

    With ``offsets`` (one per particle, pooled order), a second system starts at
    ``y_0 - offset`` and is driven by the same noise; its aggregate distance to the
    mixture and its distance to the first cloud are recorded.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    N = cfg.total
    weights = np.array([g.size / N for g in cfg.groups])
    laws = [GaussianMixture(g.initial_points, 2 * h, g.drift * h) for g in cfg.groups]
    centers = np.concatenate([g.initial_points + g.drift * h for g in cfg.groups])
    aggregate_law = GaussianMixture(centers, 2 * h, [0.0])
    y0 = np.concatenate([g.initial_points for g in cfg.groups])
    drift = np.concatenate([np.broadcast_to(g.drift, g.initial_points.shape) for g in cfg.groups])
    shift = None if offsets is None else np.asarray(offsets, dtype=float).reshape(N, 1)
    bounds = np.cumsum([0] + [g.size for g in cfg.groups])

    agg = np.empty(trials)
    per = np.empty((trials, len(cfg.groups)))
    off_agg = np.empty(trials) if shift is not None else None
    off_dist = np.empty(trials) if shift is not None else None
    for t in range(trials):
        z = make_rng(seed, t).standard_normal(y0.shape)
        Y = y0 + drift * h + math.sqrt(2 * h) * z
        agg[t] = w1_exact_1d(aggregate_law, EmpiricalMeasure(Y)) if h > 0 else 0.0
        for j, law in enumerate(laws):
            part = Y[bounds[j]:bounds[j + 1]]
            per[t, j] = w1_exact_1d(law, EmpiricalMeasure(part)) if h > 0 else 0.0
        if shift is not None:
            X = (y0 - shift) + drift * h + math.sqrt(2 * h) * z
            off_agg[t] = w1_exact_1d(aggregate_law, EmpiricalMeasure(X))
            off_dist[t] = w1_exact_1d(EmpiricalMeasure(Y), EmpiricalMeasure(X))
    weighted = per @ weights
    violation = float(np.max(agg - weighted))
    return GroupedResult(agg, per, weighted, violation, off_agg, off_dist)


# --- sampling rate ----------------------------------------------------------------------------


@dataclass
class SamplingRateResult:
    n_list: list[int]
    means: list[float]
    stderrs: list[float]
    fit: Optional[RateFit]

    def to_dict(self) -> dict:
        return {"n": self.n_list, "mean_w1": self.means, "stderr": self.stderrs,
                "fit": None if self.fit is None else self.fit.to_dict()}


def fournier_guillin(m: Measure, n_list: Sequence[int], trials: int, seed: int,
                     resamples: int = 1000) -> SamplingRateResult:
    """Mean W1 between ``n`` i.i.d. samples of ``m`` and ``m``, with a log-log fit in ``n``."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing with >= 3 values")
    if m.dim != 1:
        raise ValueError("sampling rate experiments are one-dimensional")
    means, ses = [], []
    for i, n in enumerate(n_list):
        vals = np.array([w1_exact_1d(sample(m, n, seed, stream=(i << 32) + t), m) for t in range(trials)])
        mean, se = _mean_se(vals)
        means.append(mean)
        ses.append(se)
    fit = None
    if all(v > 0 for v in means):
        fit = fit_with_ci(list(zip(n_list, means, ses)), resamples=resamples, seed=seed)
    return SamplingRateResult(n_list, means, ses, fit)


# --- common noise ----------------------------------------------------------------------------


@dataclass
class CommonNoiseResult:
    max_difference: float
    with_noise: np.ndarray
    without_noise: np.ndarray

    def to_dict(self) -> dict:
        a, sa = _mean_se(self.with_noise)
        b, sb = _mean_se(self.without_noise)
        return {"max_difference": self.max_difference, "mean_with_noise": a, "stderr_with_noise": sa,
                "mean_without_noise": b, "stderr_without_noise": sb}


def common_noise_shift_check(cfg: ConcentrationConfig, a0: float, trials: int, seed: int) -> CommonNoiseResult:
    """W1 between the conditional law and the cloud, before and after translating both by
    the common-noise displacement. A separate run without common noise (independent
    streams) gives the reference distribution."""
    if a0 < 0:
        raise ValueError("a0 must be nonnegative")
    if cfg.dim_d != 1:
        raise ValueError("the shift check is one-dimensional")
    y0 = cfg.initial_points.points
    h = cfg.horizon_h
    alpha = cfg.drift_alpha
    before = np.empty(trials)
    diffs = np.empty(trials)
    for t in range(trials):
        rng = make_rng(seed, 2 * t)
        z = rng.standard_normal(y0.shape)
        common = math.sqrt(2 * a0 * h) * rng.standard_normal(1)
        Y = y0 + alpha * h + math.sqrt(2 * h) * z + common
        law = GaussianMixture(y0, 2 * h, alpha * h + common)
        before[t] = w1_exact_1d(law, EmpiricalMeasure(Y))
        after = w1_exact_1d(pushforward_shift(law, -common), pushforward_shift(EmpiricalMeasure(Y), -common))
        diffs[t] = abs(before[t] - after)
    base = ConcentrationConfig(1, cfg.n_particles, alpha, h, max(trials, 30), seed, cfg.initial_points)
    without = single_group_trials(base, h, stream_base=2 * trials + 1)[:trials]
    return CommonNoiseResult(float(diffs.max()), before, without)


def initial_second_moment(cfg: ConcentrationConfig) -> float:
    return moment(cfg.initial_points, 2)
