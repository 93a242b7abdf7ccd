"""Independent reference computations used as test oracles.

None of these call into the package's solvers; they rely on closed forms and
scipy quadrature only.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize, stats


def cole_hopf_value(g, viscosity: float, horizon: float, y: float) -> float:
    """``w(0, y)`` for ``-w_t - nu w'' + (w')^2 = 0``, ``w(T) = g``, via the Cole-Hopf
    transform ``w = -nu log phi`` with ``phi`` solving the backward heat equation."""
    s = math.sqrt(2 * viscosity * horizon)
    zs = np.linspace(-12, 12, 4001)
    expo = -g(y + s * zs) / viscosity - 0.5 * zs ** 2
    top = float(expo.max())
    f = lambda z: math.exp(-g(y + s * z) / viscosity - 0.5 * z * z - top)
    val, _ = integrate.quad(f, -12, 12, limit=400, epsabs=0, epsrel=1e-13, points=[float(zs[expo.argmax()])])
    return -viscosity * (top + math.log(val / math.sqrt(2 * math.pi)))


def hopf_lax_value(g, horizon: float, y: float) -> float:
    """``min_z g(z) + (z - y)^2 / (4T)``: zero-viscosity value for ``L = a^2 / 4``."""
    zs = np.linspace(y - 20, y + 20, 40001)
    vals = g(zs) + (zs - y) ** 2 / (4 * horizon)
    z0 = zs[np.argmin(vals)]
    res = optimize.minimize_scalar(lambda z: g(z) + (z - y) ** 2 / (4 * horizon),
                                   bracket=(z0 - 1e-3, z0, z0 + 1e-3), tol=1e-14)
    return float(res.fun)


def constant_control_value(g, horizon: float, mean0: float) -> float:
    """``min_v T v^2 / 4 + g(mean0 + v T)`` by golden-section search."""
    vs = np.linspace(-10, 10, 20001)
    vals = horizon * vs ** 2 / 4 + g(mean0 + vs * horizon)
    v0 = vs[np.argmin(vals)]
    res = optimize.minimize_scalar(lambda v: horizon * v * v / 4 + g(mean0 + v * horizon),
                                   bracket=(v0 - 1e-3, v0, v0 + 1e-3), method="golden", tol=1e-12)
    return float(res.fun)


def w1_scipy(a, b) -> float:
    return float(stats.wasserstein_distance(np.ravel(a), np.ravel(b)))


def w1_quad_gaussian_mixture_vs_points(centers, variance, offset, points) -> float:
    """``int |F_mix - F_emp|`` by adaptive quadrature between sorted atoms."""
    c = np.ravel(centers) + offset
    s = math.sqrt(variance)
    pts = np.sort(np.ravel(points))
    F = lambda x: float(np.mean(stats.norm.cdf((x - c) / s)))
    lo = min(c.min() - 12 * s, pts[0] - 1)
    hi = max(c.max() + 12 * s, pts[-1] + 1)
    edges = np.concatenate([[lo], pts, [hi]])
    total = 0.0
    for k in range(len(edges) - 1):
        level = k / len(pts)
        val, _ = integrate.quad(lambda x: abs(F(x) - level), edges[k], edges[k + 1], limit=200, epsabs=1e-14)
        total += val
    return total
