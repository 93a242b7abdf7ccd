"""Probability measures on R^d and Wasserstein-1 distances.

Three representations are supported:

* :class:`DiscreteDensity` - a continuous, piecewise-linear density on a
  uniform 1D grid (nodal values, trapezoidal mass one);
* :class:`EmpiricalMeasure` - a uniform point cloud;
* :class:`GaussianMixture` - equal-weight Gaussians ``N(c_k + offset, variance I)``,
  i.e. a point cloud convolved with a heat kernel.

In one dimension every representation has an exact CDF that is piecewise
cubic (or simpler) between its breakpoints, so ``W1 = int |F_mu - F_nu|`` is
integrated piece by piece on the merged breakpoint set.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy import optimize, signal, special
from scipy.interpolate import CubicHermiteSpline

from .rng import make_rng

MASS_TOL = 1e-9

# A mixture is discretized on [min centre - TAIL_SIGMAS*sigma, max centre + TAIL_SIGMAS*sigma];
# the Gaussian tail mass beyond 10 sigma is ~1.5e-23.
TAIL_SIGMAS = 10.0
# Breakpoint spacing for the mixture CDF, in units of sigma.
DIRECT_POINTS_PER_SIGMA = 64
FFT_POINTS_PER_SIGMA = 200
# Above this many kernel evaluations the mixture CDF is built by FFT convolution.
DIRECT_EVAL_BUDGET = 5_000_000


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n_points: int

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"need finite lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.lo + self.spacing * np.arange(self.n_points)
        x[-1] = self.hi
        return x

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n_points, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    def shifted(self, z: float) -> "Grid1D":
        return Grid1D(self.lo + z, self.hi + z, self.n_points)

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.lo, self.hi, (self.n_points - 1) * factor + 1)

    def locate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Cell index ``i`` (clipped to ``[0, n-2]``) and fraction in ``[0, 1]``."""
        t = (np.asarray(x, dtype=float) - self.lo) / self.spacing
        i = np.clip(np.floor(t).astype(np.int64), 0, self.n_points - 2)
        return i, np.clip(t - i, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class DiscreteDensity:
    """Piecewise-linear density on a 1D grid.

    ``unit_mass=False`` admits sub-probability densities (used for the pieces of
    a split initial condition); everything else assumes mass one.
    """

    grid: Grid1D
    weights: np.ndarray
    unit_mass: bool = True

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.grid.n_points,):
            raise ValueError(f"weights shape {w.shape} does not match grid ({self.grid.n_points},)")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("density weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.unit_mass and abs(self.mass - 1.0) > MASS_TOL:
            raise ValueError(f"density mass {self.mass!r} differs from 1 by more than {MASS_TOL}")

    dim = 1

    @property
    def mass(self) -> float:
        return float(self.grid.trapezoid_weights @ self.weights)

    @classmethod
    def from_function(cls, grid: Grid1D, fn: Callable[[np.ndarray], np.ndarray]) -> "DiscreteDensity":
        w = np.asarray(fn(grid.nodes), dtype=float)
        return cls(grid, w / (grid.trapezoid_weights @ w))

    @classmethod
    def gaussian(cls, grid: Grid1D, mean: float, variance: float) -> "DiscreteDensity":
        return cls.from_function(grid, lambda x: np.exp(-0.5 * (x - mean) ** 2 / variance))

    @classmethod
    def uniform(cls, grid: Grid1D) -> "DiscreteDensity":
        return cls.from_function(grid, np.ones_like)

    def cell_masses(self) -> np.ndarray:
        w = self.weights
        return 0.5 * self.grid.spacing * (w[:-1] + w[1:])

    def cdf_at_nodes(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.cell_masses())])

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= self.grid.lo) & (x <= self.grid.hi)
        return np.where(inside, np.interp(x, self.grid.nodes, self.weights), 0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        i, s = self.grid.locate(x)
        w0, w1 = self.weights[i], self.weights[i + 1]
        h = self.grid.spacing
        within = h * (w0 * s + 0.5 * (w1 - w0) * s * s)
        out = self.cdf_at_nodes()[i] + within
        out = np.where(x <= self.grid.lo, 0.0, out)
        return np.where(x >= self.grid.hi, self.mass, out)

    def expect(self, fn) -> float:
        vals = np.asarray(fn(self.grid.nodes[:, None]), dtype=float)
        return float(self.grid.trapezoid_weights @ (vals * self.weights))

    def mean(self) -> np.ndarray:
        return np.array([self.expect(lambda x: x[:, 0])])

    def with_weights(self, weights) -> "DiscreteDensity":
        return DiscreteDensity(self.grid, weights, self.unit_mass)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 1:
            raise ValueError("points must be a nonempty N x d array")
        if not np.all(np.isfinite(p)):
            raise ValueError("points must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def expect(self, fn) -> float:
        return float(np.mean(np.asarray(fn(self.points), dtype=float)))

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    @cached_property
    def _sorted_1d(self) -> np.ndarray:
        return np.sort(self.points[:, 0])

    def cdf(self, x) -> np.ndarray:
        _require_1d(self)
        return np.searchsorted(self._sorted_1d, np.asarray(x, dtype=float), side="right") / self.size


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Equal-weight mixture of ``N(center + offset, variance * I)``."""

    centers: np.ndarray
    variance: float
    offset: np.ndarray = field(default=None)

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] < 1 or not np.all(np.isfinite(c)):
            raise ValueError("centers must be a finite nonempty N x d array")
        if not (np.isfinite(self.variance) and self.variance >= 0):
            raise ValueError(f"variance must be >= 0, got {self.variance}")
        off = np.zeros(c.shape[1]) if self.offset is None else np.atleast_1d(np.array(self.offset, dtype=float))
        if off.shape != (c.shape[1],):
            raise ValueError("offset dimension does not match centers")
        c.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))

    def atoms(self) -> EmpiricalMeasure:
        """The measure at variance 0: the centres translated by the offset."""
        return EmpiricalMeasure(self.centers + self.offset)

    def mean(self) -> np.ndarray:
        return self.centers.mean(axis=0) + self.offset

    def expect(self, fn, order: int = 40) -> float:
        if self.variance == 0:
            return self.atoms().expect(fn)
        z, w = np.polynomial.hermite_e.hermegauss(order)
        w = w / w.sum()
        d = self.dim
        grids = np.meshgrid(*([z] * d), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.meshgrid(*([w] * d), indexing="ij"), axis=0).ravel()
        total = 0.0
        base = self.centers + self.offset
        for node, weight in zip(nodes, weights):
            total += weight * np.mean(np.asarray(fn(base + self.sigma * node), dtype=float))
        return float(total)

    # --- 1D CDF machinery -------------------------------------------------

    def _direct_cdf_pdf(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.centers[:, 0] + self.offset[0]
        s = self.sigma
        F = np.zeros(x.shape)
        f = np.zeros(x.shape)
        chunk = max(1, 2_000_000 // len(c))
        for a in range(0, len(x), chunk):
            z = (x[a:a + chunk, None] - c[None, :]) / s
            F[a:a + chunk] = special.ndtr(z).mean(axis=1)
            f[a:a + chunk] = np.exp(-0.5 * z * z).mean(axis=1) / (s * np.sqrt(2 * np.pi))
        return F, f

    @cached_property
    def _cdf_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
        """Breakpoints and (F, f) at them; the flag says whether F/f are exact."""
        _require_1d(self)
        s = self.sigma
        c = self.centers[:, 0] + self.offset[0]
        lo = c.min() - TAIL_SIGMAS * s
        hi = c.max() + TAIL_SIGMAS * s
        n_direct = int(np.ceil((hi - lo) / s * DIRECT_POINTS_PER_SIGMA)) + 1
        if len(c) * n_direct <= DIRECT_EVAL_BUDGET:
            x = np.linspace(lo, hi, n_direct)
            F, f = self._direct_cdf_pdf(x)
            return x, F, f, True
        # Spread the centres onto a fine grid with cubic Lagrange weights (exact
        # for polynomial moments up to degree 3), then convolve with the kernel.
        delta = s / FFT_POINTS_PER_SIGMA
        pad = 2
        lo -= pad * delta
        n = int(np.ceil((hi - lo) / delta)) + 2 * pad + 1
        x = lo + delta * np.arange(n)
        t = (c - lo) / delta
        k = np.floor(t).astype(np.int64)
        u = t - k
        lag = [
            -u * (u - 1) * (u - 2) / 6,
            (u + 1) * (u - 1) * (u - 2) / 2,
            -(u + 1) * u * (u - 2) / 2,
            (u + 1) * u * (u - 1) / 6,
        ]
        rho = np.zeros(n)
        for j, wj in zip(range(-1, 3), lag):
            rho += np.bincount(k + j, weights=wj, minlength=n)[:n]
        rho /= len(c)
        lags = delta * np.arange(-(n - 1), n)
        kernel_F = special.ndtr(lags / s)
        kernel_f = np.exp(-0.5 * (lags / s) ** 2) / (s * np.sqrt(2 * np.pi))
        F = signal.fftconvolve(rho, kernel_F, mode="full")[n - 1:2 * n - 1]
        f = signal.fftconvolve(rho, kernel_f, mode="full")[n - 1:2 * n - 1]
        return x, np.clip(F, 0.0, 1.0), f, False

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        x, F, f, _ = self._cdf_table
        return CubicHermiteSpline(x, F, f)

    def breakpoints(self) -> np.ndarray:
        return self._cdf_table[0]

    def cdf(self, x) -> np.ndarray:
        _require_1d(self)
        x = np.asarray(x, dtype=float)
        if self.variance == 0:
            return self.atoms().cdf(x)
        xs = self.breakpoints()
        out = np.clip(self._spline(np.clip(x, xs[0], xs[-1])), 0.0, 1.0)
        out = np.where(x < xs[0], 0.0, out)
        return np.where(x > xs[-1], 1.0, out)

    def pdf(self, x) -> np.ndarray:
        _require_1d(self)
        x = np.asarray(x, dtype=float)
        if self.variance == 0:
            raise ValueError("a variance-0 mixture has no density")
        return self._direct_cdf_pdf(x.ravel())[1].reshape(x.shape)


Measure = Union[DiscreteDensity, EmpiricalMeasure, GaussianMixture]


def _require_1d(m) -> None:
    if m.dim != 1:
        raise ValueError(f"operation requires a 1D measure, got dimension {m.dim}")


def _as_plain(m: Measure) -> Measure:
    if isinstance(m, GaussianMixture) and m.variance == 0:
        return m.atoms()
    return m


# --- Wasserstein-1 -----------------------------------------------------------


def _breakpoints(m: Measure) -> np.ndarray:
    if isinstance(m, EmpiricalMeasure):
        return m._sorted_1d
    if isinstance(m, DiscreteDensity):
        return m.grid.nodes
    return m.breakpoints()


def _piece_data(m: Measure, b: np.ndarray):
    """CDF at both ends and the one-sided densities inside each piece [b_k, b_k+1]."""
    if isinstance(m, EmpiricalMeasure):
        F = m.cdf(b[:-1])
        zero = np.zeros_like(F)
        return F, F, zero, zero
    if isinstance(m, DiscreteDensity):
        F = m.cdf(b)
        mid = 0.5 * (b[:-1] + b[1:])
        inside = (mid > m.grid.lo) & (mid < m.grid.hi)
        fa = np.where(inside, np.interp(b[:-1], m.grid.nodes, m.weights), 0.0)
        fb = np.where(inside, np.interp(b[1:], m.grid.nodes, m.weights), 0.0)
        return F[:-1], F[1:], fa, fb
    xs = m.breakpoints()
    inside = (b >= xs[0]) & (b <= xs[-1])
    F = np.where(inside, m._spline(np.clip(b, xs[0], xs[-1])), np.where(b < xs[0], 0.0, 1.0))
    f = np.where(inside, m._spline(np.clip(b, xs[0], xs[-1]), 1), 0.0)
    return F[:-1], F[1:], f[:-1], f[1:]


_SUBDIV = 16


def _hermite_abs_integral(L, D0, D1, d0, d1) -> float:
    """Sum over pieces of int_0^L |D|, D the cubic Hermite interpolant of (D0, d0), (D1, d1)."""
    a0 = D0
    a1 = L * d0
    a2 = 3 * (D1 - D0) - 2 * L * d0 - L * d1
    a3 = 2 * (D0 - D1) + L * d0 + L * d1
    const = (a1 == 0) & (a2 == 0) & (a3 == 0)
    total = float(np.sum(L[const] * np.abs(a0[const])))
    nz = ~const
    if not np.any(nz):
        return total
    L, a0, a1, a2, a3 = (v[nz] for v in (L, a0, a1, a2, a3))

    def val(u):
        return a0 + u * (a1 + u * (a2 + u * a3))

    def prim(u):
        return u * (a0 + u * (a1 / 2 + u * (a2 / 3 + u * a3 / 4)))

    total_pieces = np.zeros(len(L))
    u = np.linspace(0.0, 1.0, _SUBDIV + 1)
    for j in range(_SUBDIV):
        ua = np.full(len(L), u[j])
        ub = np.full(len(L), u[j + 1])
        va, vb = val(ua), val(ub)
        cross = va * vb < 0
        seg = np.abs(prim(ub) - prim(ua))
        if np.any(cross):
            lo_u, hi_u = ua[cross].copy(), ub[cross].copy()
            sel = (a0[cross], a1[cross], a2[cross], a3[cross])
            sign_lo = np.sign(va[cross])
            for _ in range(60):
                mid = 0.5 * (lo_u + hi_u)
                vm = sel[0] + mid * (sel[1] + mid * (sel[2] + mid * sel[3]))
                same = np.sign(vm) == sign_lo
                lo_u = np.where(same, mid, lo_u)
                hi_u = np.where(same, hi_u, mid)
            r = 0.5 * (lo_u + hi_u)
            pr = r * (sel[0] + r * (sel[1] / 2 + r * (sel[2] / 3 + r * sel[3] / 4)))
            pa = prim(ua)[cross]
            pb = prim(ub)[cross]
            seg[cross] = np.abs(pr - pa) + np.abs(pb - pr)
        total_pieces += seg
    return total + float(np.sum(L * total_pieces))


def w1_exact_1d(mu: Measure, nu: Measure) -> float:
    """W1 distance in one dimension as the integral of the absolute CDF difference."""
    mu, nu = _as_plain(mu), _as_plain(nu)
    _require_1d(mu)
    _require_1d(nu)
    for m in (mu, nu):
        if isinstance(m, DiscreteDensity) and abs(m.mass - 1.0) > MASS_TOL:
            raise ValueError("W1 requires probability measures")
    b = np.union1d(_breakpoints(mu), _breakpoints(nu))
    if len(b) < 2:
        return 0.0
    Fa1, Fb1, fa1, fb1 = _piece_data(mu, b)
    Fa2, Fb2, fa2, fb2 = _piece_data(nu, b)
    return _hermite_abs_integral(np.diff(b), Fa1 - Fa2, Fb1 - Fb2, fa1 - fa2, fb1 - fb2)


def w1_assignment(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact W1 between two equal-size uniform clouds (optimal assignment)."""
    mu, nu = _as_plain(mu), _as_plain(nu)
    if not (isinstance(mu, EmpiricalMeasure) and isinstance(nu, EmpiricalMeasure)):
        raise TypeError("w1_assignment needs two point clouds")
    if mu.size != nu.size:
        raise ValueError(f"cloud sizes differ: {mu.size} vs {nu.size}")
    if mu.dim != nu.dim:
        raise ValueError("cloud dimensions differ")
    if mu.dim == 1:
        return float(np.mean(np.abs(mu._sorted_1d - nu._sorted_1d)))
    cost = np.linalg.norm(mu.points[:, None, :] - nu.points[None, :, :], axis=-1)
    rows, cols = optimize.linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


# --- moments, shifts, sampling -----------------------------------------------


def moment(m: Measure, p: float) -> float:
    """``int |x|^p dm`` with the Euclidean norm."""
    if p < 1:
        raise ValueError(f"moment order must be >= 1, got {p}")
    m = _as_plain(m)
    if isinstance(m, GaussianMixture):
        mu = m.centers + m.offset
        if p == 2:
            return float(np.mean(np.sum(mu ** 2, axis=1)) + m.dim * m.variance)
        if m.dim == 1:
            s = m.sigma
            c = mu[:, 0]
            if p == 1:
                # mean of a folded normal
                z = c / s
                return float(np.mean(s * np.sqrt(2 / np.pi) * np.exp(-0.5 * z * z) + c * (1 - 2 * special.ndtr(-z))))
            xs = m.breakpoints()
            dens = m._spline.derivative()
            return float(_quad_pieces(lambda x: np.abs(x) ** p * dens(x), xs))
        return m.expect(lambda x: np.linalg.norm(x, axis=1) ** p)
    return float(m.expect(lambda x: np.linalg.norm(x, axis=1) ** p))


def _quad_pieces(fn, xs: np.ndarray) -> float:
    # composite Gauss-Legendre on the mixture breakpoints
    z, w = np.polynomial.legendre.leggauss(8)
    a, b = xs[:-1], xs[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * z[None, :]
    return float(np.sum(half[:, None] * w[None, :] * fn(pts)))


def pushforward_shift(m: Measure, z) -> Measure:
    """Translate every atom, centre or grid node by ``z``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if isinstance(m, EmpiricalMeasure):
        if z.shape != (m.dim,):
            raise ValueError("shift dimension mismatch")
        return EmpiricalMeasure(m.points + z)
    if isinstance(m, GaussianMixture):
        if z.shape != (m.dim,):
            raise ValueError("shift dimension mismatch")
        return GaussianMixture(m.centers, m.variance, m.offset + z)
    if isinstance(m, DiscreteDensity):
        if z.shape != (1,):
            raise ValueError("shift dimension mismatch")
        if z[0] == 0:
            return m
        return DiscreteDensity(m.grid.shifted(float(z[0])), m.weights, m.unit_mass)
    raise TypeError(f"unsupported measure type {type(m).__name__}")


def sample(m: Measure, n: int, seed: int, stream: int = 0) -> EmpiricalMeasure:
    """``n`` i.i.d. draws: inverse CDF for densities, component sampling for mixtures."""
    if int(n) != n or n < 1:
        raise ValueError(f"sample size must be a positive integer, got {n}")
    rng = make_rng(seed, stream)
    if isinstance(m, GaussianMixture):
        idx = rng.integers(0, m.size, size=n)
        noise = rng.standard_normal((n, m.dim))
        return EmpiricalMeasure(m.centers[idx] + m.offset + m.sigma * noise)
    if isinstance(m, EmpiricalMeasure):
        return EmpiricalMeasure(m.points[rng.integers(0, m.size, size=n)])
    if isinstance(m, DiscreteDensity):
        return EmpiricalMeasure(_inverse_cdf(m, rng.random(n) * m.mass))
    raise TypeError(f"unsupported measure type {type(m).__name__}")


def _inverse_cdf(m: DiscreteDensity, u: np.ndarray) -> np.ndarray:
    cum = m.cdf_at_nodes()
    i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, m.grid.n_points - 2)
    h = m.grid.spacing
    w0, w1 = m.weights[i], m.weights[i + 1]
    r = u - cum[i]
    # solve h*(w0 s + (w1-w0) s^2 / 2) = r for s in [0, 1]
    a = 0.5 * h * (w1 - w0)
    b = h * w0
    disc = np.sqrt(np.maximum(b * b + 4 * a * r, 0.0))
    denom = b + disc
    s = np.where(denom > 0, 2 * r / np.where(denom > 0, denom, 1.0), 0.0)
    return m.grid.nodes[i] + h * np.clip(s, 0.0, 1.0)


# --- serialization -----------------------------------------------------------


def to_csv(m: Measure, path) -> None:
    """One row per atom, centre or node: ``x1..xd, weight``.

    Densities store the nodal density value as the weight; mixtures store the
    translated centres with weight 1/N (the variance goes in the JSON form).
    """
    if isinstance(m, DiscreteDensity):
        pts, w = m.grid.nodes[:, None], m.weights
    elif isinstance(m, EmpiricalMeasure):
        pts, w = m.points, np.full(m.size, 1.0 / m.size)
    else:
        pts, w = m.centers + m.offset, np.full(m.size, 1.0 / m.size)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k + 1}" for k in range(pts.shape[1])] + ["weight"])
        for row, wt in zip(pts, w):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(wt))])


def to_json(m: Measure) -> dict:
    if isinstance(m, DiscreteDensity):
        return {"kind": "density", "lo": m.grid.lo, "hi": m.grid.hi, "n_points": m.grid.n_points,
                "weights": m.weights.tolist(), "unit_mass": m.unit_mass}
    if isinstance(m, EmpiricalMeasure):
        return {"kind": "empirical", "points": m.points.tolist()}
    return {"kind": "mixture", "centers": m.centers.tolist(), "variance": m.variance,
            "offset": m.offset.tolist()}


def from_json(obj: dict) -> Measure:
    kind = obj["kind"]
    if kind == "density":
        return DiscreteDensity(Grid1D(obj["lo"], obj["hi"], obj["n_points"]), np.array(obj["weights"]),
                               obj.get("unit_mass", True))
    if kind == "empirical":
        return EmpiricalMeasure(np.array(obj["points"]))
    if kind == "mixture":
        return GaussianMixture(np.array(obj["centers"]), obj["variance"], np.array(obj["offset"]))
    raise ValueError(f"unknown measure kind {kind!r}")


def save_json(m: Measure, path) -> None:
    Path(path).write_text(json.dumps(to_json(m)))


def load_json(path) -> Measure:
    return from_json(json.loads(Path(path).read_text()))
