"""1-Lipschitz test functions: taper extension, lattice epsilon-nets, net-based
lower bounds for W1 and the sub-Gaussian tail experiment.

All test functions are piecewise linear with constant extrapolation, so their
integrals against every measure type reduce to hinge expectations
``E (X - b)^+``, which are exact for point clouds, Gaussian mixtures and
piecewise-linear densities.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy import special, stats

from .measures import DiscreteDensity, EmpiricalMeasure, GaussianMixture, Measure, _as_plain
from .rng import make_rng

LIP_TOL = 1e-12
NET_STEP_GUARD = 24
ENUMERATION_GUARD = 2_000_000


@dataclass(frozen=True, eq=False)
class PiecewiseLinearLip:
    """Piecewise-linear function through ``(breakpoints, values)``, constant outside."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if b.ndim != 1 or b.shape != v.shape or len(b) < 1:
            raise ValueError("breakpoints and values must be matching nonempty 1D arrays")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if len(b) > 1 and np.any(np.abs(np.diff(v)) > np.diff(b) * (1 + LIP_TOL) + LIP_TOL):
            raise ValueError("function is not 1-Lipschitz")
        b.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def __call__(self, x) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.breakpoints, self.values)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def integrate(self, m: Measure) -> float:
        """``int phi dm`` exactly (1D measures)."""
        m = _as_plain(m)
        if m.dim != 1:
            raise ValueError("test functions act on 1D measures")
        if len(self.breakpoints) == 1:
            return float(self.values[0]) * _mass(m)
        hinges = hinge_expectations(m, self.breakpoints)
        s = self.slopes()
        return float(self.values[0] * _mass(m) + np.sum(s * (hinges[:-1] - hinges[1:])))


def _mass(m: Measure) -> float:
    return m.mass if isinstance(m, DiscreteDensity) else 1.0


def hinge_expectations(m: Measure, b: np.ndarray) -> np.ndarray:
    """``E_m (X - b_k)^+`` for each ``b_k``."""
    m = _as_plain(m)
    b = np.asarray(b, dtype=float)
    if isinstance(m, EmpiricalMeasure):
        x = np.sort(m.points[:, 0])
        # sum over x > b of (x - b), via suffix sums
        suffix = np.concatenate([np.cumsum(x[::-1])[::-1], [0.0]])
        k = np.searchsorted(x, b, side="right")
        return (suffix[k] - (len(x) - k) * b) / len(x)
    if isinstance(m, GaussianMixture):
        mu = m.centers[:, 0] + m.offset[0]
        s = m.sigma
        out = np.empty(len(b))
        for i, bi in enumerate(b):
            z = (mu - bi) / s
            out[i] = np.mean((mu - bi) * special.ndtr(z) + s * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi))
        return out
    if isinstance(m, DiscreteDensity):
        return np.array([_density_hinge(m, bi) for bi in b])
    raise TypeError(f"unsupported measure {type(m).__name__}")


def _density_hinge(m: DiscreteDensity, b: float) -> float:
    # (x - b) rho(x) is quadratic on every cell, so Simpson's rule is exact
    x = m.grid.nodes
    if b >= x[-1]:
        return 0.0
    lo = max(b, x[0])
    k = np.searchsorted(x, lo, side="right")
    pts = np.concatenate([[lo], x[k:]])
    a, c = pts[:-1], pts[1:]
    mid = 0.5 * (a + c)
    f = lambda t: (t - b) * m.pdf(t)
    return float(np.sum((c - a) / 6 * (f(a) + 4 * f(mid) + f(c))))


def extend_tilde(phi: PiecewiseLinearLip, R: float) -> PiecewiseLinearLip:
    """``phi`` on ``[-R, R]``, tapered linearly in ``|x|`` to 0 on ``R < |x| < 2R``, 0 beyond."""
    if not R > 0:
        raise ValueError("R must be positive")
    b = phi.breakpoints
    inner = b[(b > -R) & (b < R)]
    knots = np.concatenate([[-2 * R, -R], inner, [R, 2 * R]])
    vals = np.concatenate([[0.0], phi([-R]), phi(inner), phi([R]), [0.0]])
    if max(abs(vals[1]), abs(vals[-2])) > R * (1 + LIP_TOL):
        raise ValueError("|phi(+-R)| must not exceed R for the extension to stay 1-Lipschitz")
    return PiecewiseLinearLip(knots, vals)


# --- lattice nets -----------------------------------------------------------------------


@dataclass(frozen=True)
class LipNet:
    """Lattice paths on the nodes ``-R + k eps`` with values in ``eps Z ∩ [-R, R]`` and
    increments in ``{-eps, 0, +eps}``.

    With ``explicit`` set, the net is that list of members instead of the full lattice.
    """

    epsilon: float
    radius_R: float
    explicit: Optional[tuple] = None

    @property
    def steps(self) -> int:
        return int(round(2 * self.radius_R / self.epsilon))

    @property
    def nodes(self) -> np.ndarray:
        return -self.radius_R + self.epsilon * np.arange(self.steps + 1)

    @property
    def levels(self) -> int:
        return self.steps + 1

    def size(self) -> int:
        if self.explicit is not None:
            return len(self.explicit)
        L = self.levels
        counts = np.ones(L, dtype=object)
        for _ in range(self.steps):
            new = counts.copy()
            new[1:] += counts[:-1]
            new[:-1] += counts[1:]
            counts = new
        return int(sum(counts))

    def size_bound(self) -> int:
        return (self.steps + 1) * 3 ** self.steps

    def member(self, level_path: Sequence[int]) -> PiecewiseLinearLip:
        vals = -self.radius_R + self.epsilon * np.asarray(level_path, dtype=float)
        return PiecewiseLinearLip(self.nodes, vals)

    def members(self) -> Iterator[PiecewiseLinearLip]:
        if self.explicit is not None:
            yield from self.explicit
            return
        if self.size() > ENUMERATION_GUARD:
            raise ValueError(f"net has {self.size()} members; enumeration is capped at {ENUMERATION_GUARD}")
        L = self.levels

        def paths(prefix):
            if len(prefix) == self.steps + 1:
                yield prefix
                return
            last = prefix[-1]
            for step in (-1, 0, 1):
                nxt = last + step
                if 0 <= nxt < L:
                    yield from paths(prefix + [nxt])

        for start in range(L):
            for p in paths([start]):
                yield self.member(p)

    def nearest_member(self, phi) -> PiecewiseLinearLip:
        """Round ``phi`` at the nodes (half up); within ``eps`` of any 1-Lipschitz
        ``phi: [-R, R] -> [-R, R]`` in sup norm."""
        v = np.asarray(phi(self.nodes), dtype=float)
        L = self.levels
        levels = np.clip(np.floor((v + self.radius_R) / self.epsilon + 0.5), 0, L - 1).astype(int)
        return self.member(levels)


def build_net_1d(epsilon: float, R: float) -> LipNet:
    if not (epsilon > 0 and R > 0):
        raise ValueError("epsilon and R must be positive")
    if epsilon > R:
        raise ValueError("epsilon must not exceed R")
    steps = 2 * R / epsilon
    if abs(steps - round(steps)) > 1e-9 or abs(R / epsilon - round(R / epsilon)) > 1e-9:
        raise ValueError("R must be an integer multiple of epsilon")
    if round(steps) > NET_STEP_GUARD:
        raise ValueError(f"2R/epsilon = {round(steps)} exceeds the size guard {NET_STEP_GUARD}")
    return LipNet(float(epsilon), float(R))


def net_with_members(net: LipNet, members: Sequence[PiecewiseLinearLip]) -> LipNet:
    return LipNet(net.epsilon, net.radius_R, tuple(members))


def _basis_coefficients(mu: Measure, nu: Measure, net: LipNet) -> np.ndarray:
    """``c_k = int hat_k d(mu - nu)`` for the hats of the extended knot set."""
    R = net.radius_R
    knots = np.concatenate([[-2 * R], net.nodes, [2 * R]])
    hm = hinge_expectations(mu, knots)
    hn = hinge_expectations(nu, knots)
    dh = hm - hn
    gaps = np.diff(knots)
    # hat_k with knots (a, b, c): [(x-a)^+ - (x-b)^+]/(b-a) - [(x-b)^+ - (x-c)^+]/(c-b)
    rise = (dh[:-2] - dh[1:-1]) / gaps[:-1]
    fall = (dh[1:-1] - dh[2:]) / gaps[1:]
    return rise - fall


def dual_lower_bound(mu: Measure, nu: Measure, net: LipNet) -> float:
    """``max over members of int extend_tilde(phi) d(mu - nu)``."""
    if net.explicit is not None:
        return max(extend_tilde(phi, net.radius_R).integrate(mu) - extend_tilde(phi, net.radius_R).integrate(nu)
                   for phi in net.members())
    c = _basis_coefficients(mu, nu, net)
    levels = -net.radius_R + net.epsilon * np.arange(net.levels)
    # Viterbi over lattice paths: best[l] = max partial sum ending at level l
    best = levels * c[0]
    for k in range(1, len(c)):
        shifted = np.full((3, net.levels), -np.inf)
        shifted[0] = best
        shifted[1, 1:] = best[:-1]
        shifted[2, :-1] = best[1:]
        best = shifted.max(axis=0) + levels * c[k]
    return float(best.max())


# --- tail experiment ----------------------------------------------------------------------


@dataclass
class TailCurve:
    x: np.ndarray
    counts: np.ndarray
    empirical_log_tail: np.ndarray
    statistics: np.ndarray
    N: int
    h: float
    trials: int

    def hoeffding_log_bound(self, c_hat: float) -> np.ndarray:
        return -self.N * self.x ** 2 / (c_hat * self.h)

    def observed(self, min_count: int = 10) -> np.ndarray:
        return (self.counts >= min_count) & (self.x > 0)

    def to_rows(self, c_hat: float) -> list[tuple[float, float, float]]:
        bound = self.hoeffding_log_bound(c_hat)
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.x, self.empirical_log_tail, bound)]


def tail_experiment(phi: PiecewiseLinearLip, N: int, h: float, alpha, trials: int, seed: int,
                    initial_points=None, n_thresholds: int = 60, chunk: int = 1000) -> TailCurve:
    """Exceedance curve of ``S = int phi d(m(h) - m^N_{Y_h})`` over independent trials.

    ``Y_h = y_0 + alpha h + sqrt(2h) Z`` and ``m(h)`` is the exact mixture law.
    Trials are drawn in chunks; chunk ``j`` uses stream ``j`` of ``seed``.
    """
    if trials < 10_000:
        raise ValueError("trials must be >= 1e4")
    if not isinstance(phi, PiecewiseLinearLip):
        raise TypeError("phi must be a PiecewiseLinearLip")
    if len(phi.breakpoints) > 1 and np.any(np.abs(phi.slopes()) > 1 + LIP_TOL):
        raise ValueError("phi is not 1-Lipschitz")
    alpha = float(np.atleast_1d(alpha)[0])
    y0 = np.zeros(N) if initial_points is None else np.asarray(initial_points, dtype=float).ravel()
    if y0.shape != (N,):
        raise ValueError("initial_points must have N entries")
    law = GaussianMixture(y0, 2 * h, [alpha * h])
    mean_phi = phi.integrate(law)
    stats_ = np.empty(trials)
    for j, start in enumerate(range(0, trials, chunk)):
        size = min(chunk, trials - start)
        rng = make_rng(seed, j)
        Y = y0[None, :] + alpha * h + math.sqrt(2 * h) * rng.standard_normal((size, N))
        stats_[start:start + size] = mean_phi - phi(Y).mean(axis=1)
    top = float(stats_.max())
    x = np.linspace(0.0, max(top, 0.0), n_thresholds)
    srt = np.sort(stats_)
    counts = trials - np.searchsorted(srt, x, side="right")
    with np.errstate(divide="ignore"):
        log_tail = np.log(counts / trials)
    return TailCurve(x, counts, log_tail, stats_, N, h, trials)


def calibrate_hoeffding_constant(curve: TailCurve, min_count: int = 10, confidence: float = 0.95) -> float:
    """Smallest ``C`` with ``log p_up(x) <= -N x^2 / (C h)`` on the observed range,
    where ``p_up`` is the one-sided Clopper-Pearson upper bound of the exceedance
    probability (so the calibration is conservative)."""
    mask = curve.observed(min_count)
    if not np.any(mask):
        raise ValueError("no thresholds with enough exceedances")
    k = curve.counts[mask]
    p_up = stats.beta.ppf(confidence, k + 1, curve.trials - k)
    x = curve.x[mask]
    ok = p_up < 1
    return float(np.max(curve.N * x[ok] ** 2 / (curve.h * -np.log(p_up[ok]))))
