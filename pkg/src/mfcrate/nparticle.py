"""Finite-difference dynamic programming for the N-particle control problem.

The value function ``V(t, x^1..x^N)`` (``x^k`` in R^d) solves, backward from
``V(T) = G(m^N_x)``,

    -V_t - sum_k Lap_k V - a0 sum_{k,l} tr D2_{kl} V + (1/N) sum_k H(x^k, N D_k V) = F(m^N_x).

The scheme on a tensor grid with ``N*d`` axes is explicit monotone upwinding
for ``H``, an explicit mixed-derivative stencil for the common-noise cross
terms, and an implicit (axis-split) Laplacian with coefficient ``1 + a0``.
Boundaries use linear extrapolation (zero second difference).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .measures import Grid1D
from .model import HamiltonianModel, MeanFunctional, ModelConfig
from .rng import make_rng

MAX_AXES = 4


class StepRestrictionError(ValueError):
    """The time step is too large for the explicit parts of the scheme."""


class DivergenceError(RuntimeError):
    """The solver produced non-finite values."""


# --- shared 1D-per-axis building blocks ------------------------------------------


def one_sided_differences(v: np.ndarray, axis: int, h: float, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward differences along ``axis`` (times ``scale``); at the ends
    the missing one is copied from the other (linear extrapolation)."""
    diff = np.diff(v, axis=axis)
    diff *= scale / h
    first = [slice(None)] * v.ndim
    last = [slice(None)] * v.ndim
    first[axis] = slice(0, 1)
    last[axis] = slice(-1, None)
    back = np.concatenate([diff[tuple(first)], diff], axis=axis)
    fwd = np.concatenate([diff, diff[tuple(last)]], axis=axis)
    return back, fwd


def godunov_hamiltonian(ham: HamiltonianModel, x: np.ndarray, p_back: np.ndarray, p_fwd: np.ndarray,
                        p_star: Optional[np.ndarray] = None) -> np.ndarray:
    """Monotone numerical Hamiltonian for ``H`` convex and separable in ``p``.

    Per component: ``min`` of ``H`` over ``[p_back, p_fwd]`` when ordered, ``max``
    over ``[p_fwd, p_back]`` otherwise. Arrays carry a trailing axis of length d.
    """
    if p_star is None:
        p_star = ham.minimizer_p(x)
    p_star = np.broadcast_to(p_star, np.broadcast_shapes(p_star.shape, p_back.shape))
    ordered = p_back <= p_fwd
    choice = np.clip(p_star, np.minimum(p_back, p_fwd), np.maximum(p_back, p_fwd))
    d = p_back.shape[-1]
    if np.any(~ordered):
        for c in range(d):
            q_back = np.array(p_star, copy=True)
            q_fwd = np.array(p_star, copy=True)
            q_back[..., c] = p_back[..., c]
            q_fwd[..., c] = p_fwd[..., c]
            pick_back = ham.eval_h(x, q_back) >= ham.eval_h(x, q_fwd)
            worst = np.where(pick_back, p_back[..., c], p_fwd[..., c])
            choice[..., c] = np.where(ordered[..., c], choice[..., c], worst)
    return ham.eval_h(x, choice)


class TridiagonalSolver:
    """Constant-coefficient solver for ``I - r D2`` with identity rows at both ends,
    applied along any axis of a tensor by a slice-wise Thomas sweep."""

    def __init__(self, n: int, r: float):
        self.n = n
        self.r = r
        lower = np.full(n, -r)
        upper = np.full(n, -r)
        diag = np.full(n, 1 + 2 * r)
        lower[0] = lower[-1] = upper[0] = upper[-1] = 0.0
        diag[0] = diag[-1] = 1.0
        self.lower = lower
        self.c_prime = np.zeros(n)
        self.inv_m = np.zeros(n)
        self.inv_m[0] = 1.0 / diag[0]
        self.c_prime[0] = upper[0] * self.inv_m[0]
        for i in range(1, n):
            m = diag[i] - lower[i] * self.c_prime[i - 1]
            self.inv_m[i] = 1.0 / m
            self.c_prime[i] = upper[i] * self.inv_m[i]

    def solve_inplace(self, v: np.ndarray, axis: int) -> np.ndarray:
        view = np.moveaxis(v, axis, 0)
        # sweep over contiguous slabs; strided slabs are several times slower
        w = view if axis == 0 or v.ndim == 1 else np.ascontiguousarray(view)
        tmp = np.empty_like(w[0])
        w[0] *= self.inv_m[0]
        for i in range(1, self.n):
            np.multiply(w[i - 1], self.lower[i], out=tmp)
            w[i] -= tmp
            w[i] *= self.inv_m[i]
        for i in range(self.n - 2, -1, -1):
            np.multiply(w[i + 1], self.c_prime[i], out=tmp)
            w[i] -= tmp
        if w is not view:
            view[...] = w
        return v


def implicit_diffusion(v: np.ndarray, axes, r: float, solver: Optional[TridiagonalSolver] = None) -> np.ndarray:
    """Apply ``prod_a (I - r D2_a)^{-1}`` (Lie splitting), ``r = dt * coeff / h^2``."""
    if r == 0:
        return v
    solver = solver or TridiagonalSolver(v.shape[axes[0]], r)
    out = np.array(v, dtype=float, copy=True)
    for a in axes:
        solver.solve_inplace(out, a)
    return out


def _pad_linear(v: np.ndarray) -> np.ndarray:
    """Pad every axis by one ghost node using linear extrapolation."""
    out = v
    for a in range(v.ndim):
        lo = 2 * np.take(out, [0], axis=a) - np.take(out, [1], axis=a)
        hi = 2 * np.take(out, [-1], axis=a) - np.take(out, [-2], axis=a)
        out = np.concatenate([lo, out, hi], axis=a)
    return out


def cross_derivative_sum(v: np.ndarray, axis_pairs, h: float) -> np.ndarray:
    """``sum over (i, j) in axis_pairs of 2 * d2 v / dx_i dx_j`` with the 7-point stencil
    ``[v(++) + v(--) - v(+i) - v(-i) - v(+j) - v(-j) + 2 v] / (2 h^2)``."""
    pv = _pad_linear(v)
    core = tuple(slice(1, -1) for _ in range(v.ndim))
    out = np.zeros_like(v)

    def shifted(offsets):
        sl = list(core)
        for ax, o in offsets.items():
            sl[ax] = slice(1 + o, pv.shape[ax] - 1 + o if pv.shape[ax] - 1 + o != 0 else None)
        return pv[tuple(sl)]

    for i, j in axis_pairs:
        stencil = (shifted({i: 1, j: 1}) + shifted({i: -1, j: -1}) - shifted({i: 1}) - shifted({i: -1})
                   - shifted({j: 1}) - shifted({j: -1}) + 2 * v) / (2 * h * h)
        out += 2 * stencil
    return out


# --- problem and solution types ------------------------------------------------


@dataclass(frozen=True)
class NParticleProblem:
    cfg: ModelConfig
    n_particles: int
    axis_grid: Grid1D
    n_time_steps: int

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError("n_particles must be a positive integer")
        if self.n_particles * self.cfg.dim_d > MAX_AXES:
            raise ValueError(f"N*d = {self.n_particles * self.cfg.dim_d} exceeds the tensor guard {MAX_AXES}")
        if self.n_time_steps < 2:
            raise ValueError("n_time_steps must be >= 2")

    @property
    def n_axes(self) -> int:
        return self.n_particles * self.cfg.dim_d

    @property
    def dt(self) -> float:
        return self.cfg.horizon_T / self.n_time_steps

    @staticmethod
    def default_half_width(cfg: ModelConfig) -> float:
        T = cfg.horizon_T
        return cfg.hamiltonian.control_radius_R * T + 4 * math.sqrt(2 * T * (1 + cfg.common_noise_a0))

    @classmethod
    def auto(cls, cfg: ModelConfig, n_particles: int, n_points: int = 201, half_width: Optional[float] = None,
             cfl: float = 0.9, min_steps: int = 20) -> "NParticleProblem":
        """Choose the time step from the drift bound (and the cross-term restriction)."""
        X = cls.default_half_width(cfg) if half_width is None else half_width
        grid = Grid1D(-X, X, n_points)
        h = grid.spacing
        axes = n_particles * cfg.dim_d
        dt = cfl * h / (axes * cfg.hamiltonian.control_radius_R)
        if cfg.common_noise_a0 > 0 and n_particles > 1:
            dt = min(dt, cfl * h * h / (2 * cfg.common_noise_a0 * (n_particles - 1) * cfg.dim_d))
        steps = max(min_steps, int(math.ceil(cfg.horizon_T / dt)))
        return cls(cfg, n_particles, grid, steps)


@dataclass
class ValueTensor:
    """Saved time slices of the value function.

    ``values[s]`` holds ``V(times[s], .)``; axis ``k*d + c`` of a slice is the
    c-th coordinate of particle k.
    """

    values: np.ndarray
    times: np.ndarray
    grid: Grid1D
    n_particles: int
    dim_d: int
    problem: Optional[NParticleProblem] = None
    max_abs_step_drift: float = 0.0

    @property
    def n_axes(self) -> int:
        return self.n_particles * self.dim_d

    def slice_at(self, t_index: int) -> np.ndarray:
        return self.values[t_index]

    def value_at(self, t_index: int, x) -> float:
        """Multilinear interpolation of slice ``t_index`` at state ``x`` (length N*d)."""
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return float(multilinear(self.values[t_index], self.grid, x)[0])

    def export_binary(self, path) -> dict:
        """Write raw float64 little-endian data (time-major, then particle 1 fastest)
        and return the JSON metadata describing the layout."""
        # numpy is C-ordered (last axis fastest); reverse the spatial axes so that
        # particle 1 is the fastest-varying index on disk.
        arr = np.transpose(self.values, (0,) + tuple(range(self.values.ndim - 1, 0, -1)))
        np.ascontiguousarray(arr, dtype="<f8").tofile(path)
        return {"shape_time": int(self.values.shape[0]), "axis_points": self.grid.n_points,
                "n_particles": self.n_particles, "dim_d": self.dim_d, "lo": self.grid.lo, "hi": self.grid.hi,
                "times": self.times.tolist(), "order": "time-major, then particle 1 fastest", "dtype": "<f8"}


# --- helpers for functions of the empirical measure at grid nodes ---------------


def _functional_on_nodes(fun: MeanFunctional, grid: Grid1D, n_particles: int, d: int) -> np.ndarray:
    axes = n_particles * d
    M = grid.n_points
    nodes = grid.nodes
    out = np.empty((M,) * axes)
    rest = axes - 1
    if rest == 0:
        pts = nodes[:, None, None]  # (M, N=1, d=1)
        return np.asarray(fun.on_clouds(pts), dtype=float)
    mesh = np.meshgrid(*([nodes] * rest), indexing="ij")
    coords_rest = np.stack([m.ravel() for m in mesh], axis=-1)
    for i0 in range(M):
        coords = np.concatenate([np.full((coords_rest.shape[0], 1), nodes[i0]), coords_rest], axis=1)
        pts = coords.reshape(-1, n_particles, d)
        out[i0] = np.asarray(fun.on_clouds(pts), dtype=float).reshape((M,) * rest)
    return out


def _particle_positions(grid: Grid1D, axes: int, k: int, d: int) -> np.ndarray:
    """Broadcastable array of particle k's position: shape (1.., M, ..1, d)."""
    shape = [1] * axes + [d]
    xk = np.zeros([grid.n_points if k * d <= a < (k + 1) * d else 1 for a in range(axes)] + [d])
    for c in range(d):
        sh = [1] * axes
        sh[k * d + c] = grid.n_points
        xk[..., c] = grid.nodes.reshape(sh)
    return xk


class BackwardHJBStepper:
    """One backward step of the N-particle scheme; reused with N = 1 by the mean-field solver."""

    def __init__(self, ham: HamiltonianModel, grid: Grid1D, n_particles: int, d: int, dt: float,
                 diffusion: float = 1.0, a0: float = 0.0, gradient_scale: Optional[float] = None):
        self.ham = ham
        self.grid = grid
        self.N = n_particles
        self.d = d
        self.dt = dt
        self.a0 = a0
        self.axes = n_particles * d
        self.scale = float(n_particles if gradient_scale is None else gradient_scale)
        h = grid.spacing
        self.h = h
        self.diff_r = dt * (diffusion + a0) / h ** 2
        self.solver = TridiagonalSolver(grid.n_points, self.diff_r) if self.diff_r > 0 else None
        self.positions = [_particle_positions(grid, self.axes, k, d) for k in range(n_particles)]
        self.p_star = [ham.minimizer_p(xk) for xk in self.positions]
        self.pairs = [(k * d + c, l * d + c) for k in range(n_particles) for l in range(k + 1, n_particles)
                      for c in range(d)]
        if a0 > 0 and self.pairs and dt > h * h / (2 * a0 * (n_particles - 1) * d) * (1 + 1e-12):
            raise StepRestrictionError(
                f"dt={dt:.3g} exceeds the cross-derivative restriction h^2/(2 a0 (N-1) d)")

    def hamiltonian_sum(self, v: np.ndarray) -> tuple[np.ndarray, float]:
        """``(1/N) sum_k H_godunov(x^k, N D^-_k v, N D^+_k v)`` and a bound on the drift ``|H_p|``."""
        total = np.zeros_like(v)
        max_drift = 0.0
        ham = self.ham
        if self.d == 1:
            return self._hamiltonian_sum_1d(v)
        for k in range(self.N):
            backs, fwds = [], []
            lo = np.empty(self.d)
            hi = np.empty(self.d)
            for c in range(self.d):
                b, f = one_sided_differences(v, k * self.d + c, self.h, self.scale)
                backs.append(b)
                fwds.append(f)
                # both arrays hold the same set of differences
                lo[c] = b.min()
                hi[c] = b.max()
            if self.d == 1:
                pb, pf = backs[0][..., None], fwds[0][..., None]
            else:
                pb, pf = np.stack(backs, axis=-1), np.stack(fwds, axis=-1)
            xk = self.positions[k]
            if ham.upwind_h is not None:
                total += ham.upwind_h(xk, pb, pf)
            else:
                total += godunov_hamiltonian(ham, xk, pb, pf, self.p_star[k])
            # for separable convex H, |H_p| over the box [lo, hi] peaks at a corner
            corners = np.stack(np.meshgrid(*[[lo[c], hi[c]] for c in range(self.d)], indexing="ij"),
                               axis=-1).reshape(-1, self.d)
            xs = xk.reshape(-1, self.d)
            for q in corners:
                max_drift = max(max_drift, float(np.abs(ham.grad_p_h(xs, q[None, :])).max()))
        return total / self.N, max_drift

    def _hamiltonian_sum_1d(self, v: np.ndarray) -> tuple[np.ndarray, float]:
        # Same flux as the general path, evaluated on views of one difference array:
        # interior nodes see (diff[i-1], diff[i]); each end node reuses its one difference.
        total = np.zeros_like(v)
        max_drift = 0.0
        ham = self.ham
        for k in range(self.N):
            diff = np.diff(v, axis=k)
            diff *= self.scale / self.h
            xk = self.positions[k]

            def along(arr, sl, axis=k):
                idx = [slice(None)] * arr.ndim
                idx[axis] = sl
                return arr[tuple(idx)]

            interior = along(total, slice(1, -1))
            x_in = along(xk, slice(1, -1))
            pb, pf = along(diff, slice(None, -1)), along(diff, slice(1, None))
            if ham.upwind_h_into is not None:
                out, scratch = self._buffers(k, interior.shape)
                ham.upwind_h_into(x_in[..., 0], pb, pf, out, scratch)
                interior += out
            else:
                interior += self._flux(x_in, pb, pf)
            for sl in (slice(0, 1), slice(-1, None)):
                d_end = along(diff, sl)
                along(total, sl)[...] += self._flux(along(xk, sl), d_end, d_end)
            xs = xk.reshape(-1, 1)
            for q in (diff.min(), diff.max()):
                max_drift = max(max_drift, float(np.abs(ham.grad_p_h(xs, np.array([[q]]))).max()))
        return total / self.N, max_drift

    def _flux(self, x: np.ndarray, pb: np.ndarray, pf: np.ndarray) -> np.ndarray:
        ham = self.ham
        if ham.upwind_h is not None:
            return ham.upwind_h(x, pb[..., None], pf[..., None])
        return godunov_hamiltonian(ham, x, pb[..., None], pf[..., None], ham.minimizer_p(x))

    def _buffers(self, k: int, shape: tuple) -> tuple[np.ndarray, np.ndarray]:
        if not hasattr(self, "_scratch"):
            self._scratch = {}
        if k not in self._scratch:
            self._scratch[k] = (np.empty(shape), np.empty(shape))
        return self._scratch[k]

    def step(self, v_next: np.ndarray, source: Optional[np.ndarray] = None) -> tuple[np.ndarray, float]:
        ham_sum, drift = self.hamiltonian_sum(v_next)
        rhs = v_next - self.dt * ham_sum
        if source is not None:
            rhs = rhs + self.dt * source
        if self.a0 > 0 and self.pairs:
            rhs = rhs + self.dt * self.a0 * cross_derivative_sum(v_next, self.pairs, self.h)
        if self.solver is None:
            return rhs, drift
        for a in range(self.axes):
            self.solver.solve_inplace(rhs, a)
        return rhs, drift


def solve_hjb(prob: NParticleProblem, store_every: Optional[int] = None,
              memory_budget_bytes: int = 1_000_000_000) -> ValueTensor:
    """Backward solve; keeps every ``store_every``-th slice (auto from the memory budget)."""
    cfg = prob.cfg
    N, d = prob.n_particles, cfg.dim_d
    grid = prob.axis_grid
    dt = prob.dt
    n = prob.n_time_steps
    stepper = BackwardHJBStepper(cfg.hamiltonian, grid, N, d, dt, 1.0, cfg.common_noise_a0)
    slice_bytes = 8 * grid.n_points ** prob.n_axes
    if store_every is None:
        max_slices = max(3, memory_budget_bytes // slice_bytes)
        store_every = max(1, int(math.ceil(n / (max_slices - 1))))
    stored_idx = sorted(set(range(0, n + 1, store_every)) | {n})
    values = np.empty((len(stored_idx),) + (grid.n_points,) * prob.n_axes)
    pos = {s: i for i, s in enumerate(stored_idx)}

    v = _functional_on_nodes(cfg.cost.terminal, grid, N, d)
    source = None
    if cfg.cost.running.bound > 0:
        source = _functional_on_nodes(cfg.cost.running, grid, N, d)
    values[pos[n]] = v
    worst = 0.0
    for step in range(n - 1, -1, -1):
        v, drift = stepper.step(v, source)
        worst = max(worst, drift)
        if dt * drift * prob.n_axes > grid.spacing * (1 + 1e-9):
            raise StepRestrictionError(
                f"explicit Hamiltonian step violates the CFL restriction: dt*|H_p|*axes/h = "
                f"{dt * drift * prob.n_axes / grid.spacing:.3f} > 1")
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"non-finite values at step {step}")
        if step in pos:
            values[pos[step]] = v
    times = np.array(stored_idx, dtype=float) * dt
    return ValueTensor(values, times, grid, N, d, prob, worst)


# --- gradients, feedback, estimates ------------------------------------------------


def multilinear(field: np.ndarray, grid: Grid1D, x: np.ndarray) -> np.ndarray:
    """Interpolate a tensor field at points ``x`` of shape (n, axes)."""
    x = np.atleast_2d(x)
    axes = field.ndim
    idx, frac = grid.locate(x)
    out = np.zeros(x.shape[0])
    for corner in range(2 ** axes):
        bits = [(corner >> a) & 1 for a in range(axes)]
        w = np.ones(x.shape[0])
        index = []
        for a, b in enumerate(bits):
            w *= frac[:, a] if b else 1 - frac[:, a]
            index.append(idx[:, a] + b)
        out += w * field[tuple(index)]
    return out


def central_gradient(v: np.ndarray, h: float) -> list[np.ndarray]:
    """Central differences in the interior, one-sided at the ends."""
    if v.ndim == 1:
        return [np.gradient(v, h, edge_order=1)]
    return list(np.gradient(v, h, edge_order=1))


def _time_index(v: ValueTensor, t_index: int) -> int:
    if not 0 <= t_index < len(v.times):
        raise IndexError(f"time index {t_index} outside [0, {len(v.times)})")
    return t_index


def optimal_feedback(v: ValueTensor, t_index: int, x, ham: Optional[HamiltonianModel] = None) -> np.ndarray:
    """``alpha_k = -D_p H(x^k, N D_k V)`` at state ``x`` (length N*d)."""
    ham = ham or v.problem.cfg.hamiltonian
    x = np.asarray(x, dtype=float).reshape(-1, v.n_axes)
    grads = central_gradient(v.values[_time_index(v, t_index)], v.grid.spacing)
    return _feedback_from_gradients(grads, v, x, ham)


def _feedback_from_gradients(grads, v: ValueTensor, x: np.ndarray, ham: HamiltonianModel) -> np.ndarray:
    N, d = v.n_particles, v.dim_d
    p = np.stack([multilinear(g, v.grid, x) for g in grads], axis=-1) * N
    xs = x.reshape(-1, N, d)
    ps = p.reshape(-1, N, d)
    return (-ham.grad_p_h(xs, ps)).reshape(x.shape)


def lipschitz_check(v: ValueTensor) -> dict:
    """``N * max_k |D_k V|`` over interior nodes and saved times (central differences)."""
    N, d = v.n_particles, v.dim_d
    h = v.grid.spacing
    inner = tuple(slice(1, -1) for _ in range(v.n_axes))
    best, where = 0.0, None
    for s in range(len(v.times)):
        grads = central_gradient(v.values[s], h)
        for k in range(N):
            norm = np.sqrt(sum(grads[k * d + c][inner] ** 2 for c in range(d)))
            j = int(np.argmax(norm))
            if norm.flat[j] > best:
                best = float(norm.flat[j])
                node = np.unravel_index(j, norm.shape)
                where = {"time": float(v.times[s]), "particle": k,
                         "state": [float(v.grid.nodes[i + 1]) for i in node]}
    return {"value": N * best, "argmax": where}


def semiconcavity_check(v: ValueTensor, samples: int, seed: int, inner_fraction: float = 0.6) -> dict:
    """Worst ratio of the second-order quotient along random ``(xi, xi0)``.

    Nodes are drawn from the central ``inner_fraction`` of each axis and from
    saved times with neighbours on both sides. The ratio is
    ``Q(xi, xi0) / (N^{-1} sum |xi^i|^2 + xi0^2)`` with ``Q`` the
    finite-difference Hessian quadratic form in (x, t).
    """
    if samples < 100:
        raise ValueError("samples must be >= 100")
    D = v.n_axes
    N, d = v.n_particles, v.dim_d
    M = v.grid.n_points
    S = len(v.times)
    if S < 3:
        raise ValueError("need at least three saved time slices for time differences")
    half = int(math.floor(inner_fraction * (M - 1) / 2))
    mid = (M - 1) // 2
    lo_i, hi_i = max(1, mid - half), min(M - 2, mid + half)
    if hi_i < lo_i:
        raise ValueError("grid has no interior nodes for second differences")
    rng = make_rng(seed, 0)
    t_idx = rng.integers(1, S - 1, size=samples)
    nodes = rng.integers(lo_i, hi_i + 1, size=(samples, D))
    xi = rng.standard_normal((samples, D))
    xi0 = rng.standard_normal(samples)
    h = v.grid.spacing
    dts = np.diff(v.times)
    V = v.values

    def at(s, offs):
        idx = tuple(nodes[:, a] + offs[a] for a in range(D))
        return V[(s,) + idx]

    zero = np.zeros(D, dtype=np.int64)
    quad = np.zeros(samples)
    c = at(t_idx, zero)
    for a in range(D):
        ea = zero.copy()
        ea[a] = 1
        haa = (at(t_idx, ea) - 2 * c + at(t_idx, -ea)) / h ** 2
        quad += haa * xi[:, a] ** 2
        for b in range(a + 1, D):
            eb = zero.copy()
            eb[b] = 1
            hab = (at(t_idx, ea + eb) - at(t_idx, ea - eb) - at(t_idx, eb - ea) + at(t_idx, -ea - eb)) / (4 * h * h)
            quad += 2 * hab * xi[:, a] * xi[:, b]
    tau_m = dts[t_idx - 1]
    tau_p = dts[t_idx]
    vm, vp = at(t_idx - 1, zero), at(t_idx + 1, zero)
    htt = 2 * (vp * tau_m - c * (tau_m + tau_p) + vm * tau_p) / (tau_m * tau_p * (tau_m + tau_p))
    quad += htt * xi0 ** 2
    for a in range(D):
        ea = zero.copy()
        ea[a] = 1
        hta = ((at(t_idx + 1, ea) - at(t_idx + 1, -ea)) - (at(t_idx - 1, ea) - at(t_idx - 1, -ea))) / (
            2 * h * (tau_m + tau_p))
        quad += 2 * hta * xi[:, a] * xi0
    block = (xi.reshape(samples, N, d) ** 2).sum(axis=(1, 2)) / N
    ratio = quad / (block + xi0 ** 2)
    j = int(np.argmax(ratio))
    return {"value": float(ratio.max()),
            "argmax": {"time": float(v.times[t_idx[j]]), "state": v.grid.nodes[nodes[j]].tolist()},
            "samples": int(samples)}


@dataclass
class MonteCarloResult:
    mean: float
    stderr: float
    trials: int
    discarded: int


FeedbackFn = Callable[[float, np.ndarray], np.ndarray]


def tensor_feedback(v: ValueTensor, ham: HamiltonianModel) -> FeedbackFn:
    """Feedback ``(t, states[n, N, d]) -> controls[n, N, d]`` from the nearest saved slice."""
    cache: dict[int, list[np.ndarray]] = {}

    def fb(t: float, states: np.ndarray) -> np.ndarray:
        s = int(np.argmin(np.abs(v.times - t)))
        if s not in cache:
            cache.clear()
            cache[s] = central_gradient(v.values[s], v.grid.spacing)
        flat = states.reshape(states.shape[0], -1)
        return _feedback_from_gradients(cache[s], v, flat, ham).reshape(states.shape)

    return fb


def policy_evaluate_mc(prob: NParticleProblem, v: Optional[ValueTensor], x0, trials: int, seed: int,
                       feedback: Optional[FeedbackFn] = None, n_steps: Optional[int] = None,
                       max_discard_rate: float = 0.01) -> MonteCarloResult:
    """Monte Carlo cost of a feedback policy from state ``x0`` (length N*d).

    Default policy: the tensor feedback of ``v``. Paths leaving the grid box are
    discarded; more than ``max_discard_rate`` of them is an error.
    """
    if trials < 1000:
        raise ValueError("trials must be >= 1000")
    cfg = prob.cfg
    N, d = prob.n_particles, cfg.dim_d
    ham = cfg.hamiltonian
    x0 = np.asarray(x0, dtype=float).reshape(N, d)
    lo, hi = prob.axis_grid.lo, prob.axis_grid.hi
    if np.any(x0 <= lo) or np.any(x0 >= hi):
        raise ValueError("x0 must lie inside the grid")
    if feedback is None:
        if v is None:
            raise ValueError("need a value tensor or an explicit feedback")
        feedback = tensor_feedback(v, ham)
    steps = prob.n_time_steps if n_steps is None else n_steps
    dt = cfg.horizon_T / steps
    rng = make_rng(seed, 0)
    X = np.broadcast_to(x0, (trials, N, d)).copy()
    cost = np.zeros(trials)
    alive = np.ones(trials, dtype=bool)
    a0 = cfg.common_noise_a0
    running = cfg.cost.running
    for n in range(steps):
        t = n * dt
        alpha = feedback(t, X)
        cost += dt * ham.eval_l(X, alpha).mean(axis=1)
        if running.bound > 0:
            cost += dt * running.on_clouds(X)
        noise = math.sqrt(2 * dt) * rng.standard_normal((trials, N, d))
        if a0 > 0:
            noise = noise + math.sqrt(2 * a0 * dt) * rng.standard_normal((trials, 1, d))
        X = X + alpha * dt + noise
        outside = np.any((X <= lo) | (X >= hi), axis=(1, 2))
        alive &= ~outside
        X = np.clip(X, lo, hi)
    cost += cfg.cost.terminal.on_clouds(X)
    kept = cost[alive]
    discarded = trials - int(alive.sum())
    if discarded > max_discard_rate * trials:
        raise RuntimeError(f"{discarded} of {trials} paths left the domain (limit {max_discard_rate:.0%})")
    return MonteCarloResult(float(kept.mean()), float(kept.std(ddof=1) / math.sqrt(kept.size)), trials, discarded)
