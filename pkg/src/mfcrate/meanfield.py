"""Mean-field control of the Fokker-Planck equation (one space dimension, no common noise).

Discretization
--------------
Densities live on the nodes of a :class:`Grid1D` with trapezoid control
volumes ``w_i``. One forward step of ``m_t = m'' - (alpha m)'`` is

    rho~ = rho - dt/w * (flux_{i+1/2} - flux_{i-1/2}),   (W + dt K) rho_new = W rho~,

with upwind face fluxes (face velocity = mean of the nodal controls), no-flux
ends and ``K`` the Neumann stiffness matrix. Mass ``sum w_i rho_i`` is conserved
exactly. The discrete cost is

    J = sum_n dt [sum_i w_i L(x_i, alpha^n_i) rho^n_i + F(rho^n)] + G(rho^Nt),

and its exact gradient is obtained by reverse-mode differentiation of the
scheme (the discrete adjoint).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.interpolate import RectBivariateSpline
from scipy.linalg import solve_banded

from .measures import DiscreteDensity, Grid1D
from .model import HamiltonianModel, MeanFunctional, ModelConfig
from .nparticle import BackwardHJBStepper, central_gradient
from .rng import make_rng

SOLVER_TOL = 1e-8


class CFLError(ValueError):
    """Explicit advection step too large for the control magnitude."""


@dataclass
class ControlField:
    """Feedback ``alpha(t_n, x_i)`` held constant on ``[t_n, t_n+1)``; ``values`` is (n_t, M)."""

    grid: Grid1D
    times: np.ndarray
    values: np.ndarray
    bound_R: float = np.inf

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times) - 1, self.grid.n_points):
            raise ValueError(f"control shape {self.values.shape} does not match "
                             f"({len(self.times) - 1}, {self.grid.n_points})")
        if np.any(np.abs(self.values) > self.bound_R * (1 + 1e-12)):
            raise ValueError("control exceeds its declared bound")

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def constant(cls, grid: Grid1D, T: float, n_steps: int, value: float = 0.0, t0: float = 0.0,
                 bound_R: float = np.inf) -> "ControlField":
        return cls(grid, t0 + (T - t0) * np.arange(n_steps + 1) / n_steps,
                   np.full((n_steps, grid.n_points), float(value)), bound_R)


@dataclass
class MFTrajectory:
    grid: Grid1D
    times: np.ndarray
    weights: np.ndarray  # (n_t + 1, M)

    def density(self, n: int) -> DiscreteDensity:
        return DiscreteDensity(self.grid, np.maximum(self.weights[n], 0.0), unit_mass=False)

    def masses(self) -> np.ndarray:
        return self.weights @ self.grid.trapezoid_weights


@dataclass
class MFCSolution:
    control: ControlField
    trajectory: MFTrajectory
    value: float
    adjoint_u: np.ndarray  # (n_t + 1, M)
    method: str
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def feedback_residual(self, ham: HamiltonianModel, mass_floor: float = 1e-8) -> float:
        """max |alpha - (-D_p H(x, D u))| over interior nodes carrying mass."""
        x = self.control.grid.nodes
        worst = 0.0
        for n in range(self.control.n_steps):
            du = central_gradient(self.adjoint_u[n + 1], self.control.grid.spacing)[0]
            target = -ham.grad_p_h(x[:, None], du[:, None])[:, 0]
            mask = self.trajectory.weights[n] > mass_floor
            mask[[0, -1]] = False
            if np.any(mask):
                worst = max(worst, float(np.abs(self.control.values[n] - target)[mask].max()))
        return worst


# --- forward scheme and its adjoint -------------------------------------------------


class _FPScheme:
    def __init__(self, grid: Grid1D, dt: float):
        self.grid = grid
        self.dt = dt
        h = grid.spacing
        self.w = grid.trapezoid_weights
        M = grid.n_points
        # S = W + dt K in banded storage
        ab = np.zeros((3, M))
        ab[0, 1:] = -dt / h
        ab[2, :-1] = -dt / h
        diag = np.full(M, 2 * dt / h)
        diag[0] = diag[-1] = dt / h
        ab[1] = self.w + diag
        self.S = ab

    def check_cfl(self, alpha: np.ndarray) -> None:
        ratio = self.dt * np.abs(alpha) / self.w
        if np.any(ratio > 1 + 1e-12):
            raise CFLError(f"advection CFL number {ratio.max():.3f} > 1; reduce dt")

    @staticmethod
    def fluxes(alpha_row: np.ndarray, rho: np.ndarray) -> np.ndarray:
        """Donor-cell face fluxes: node i sends alpha_i^+ rho_i right and alpha_i^- rho_i left."""
        return np.maximum(alpha_row[:-1], 0) * rho[:-1] - np.maximum(-alpha_row[1:], 0) * rho[1:]

    def step(self, alpha_row: np.ndarray, rho: np.ndarray) -> np.ndarray:
        flux = self.fluxes(alpha_row, rho)
        rhs = self.w * rho
        rhs[:-1] -= self.dt * flux
        rhs[1:] += self.dt * flux
        return solve_banded((1, 1), self.S, rhs, check_finite=False)

    def adjoint_step(self, alpha_row: np.ndarray, rho: np.ndarray, lam_next: np.ndarray):
        """Return ``(A^T mu, d(mu . A rho)/d alpha)`` with ``mu = S^{-1} lam_next``."""
        mu = solve_banded((1, 1), self.S, lam_next, check_finite=False)
        ap = np.maximum(alpha_row, 0)
        am = np.maximum(-alpha_row, 0)
        right = np.zeros_like(mu)  # mu_i - mu_{i+1}, zero where there is no right face
        left = np.zeros_like(mu)  # mu_i - mu_{i-1}
        right[:-1] = mu[:-1] - mu[1:]
        left[1:] = mu[1:] - mu[:-1]
        back = self.w * mu - self.dt * (ap * right + am * left)
        # one-sided slopes of the flux in alpha_i; the kink at 0 gets their average
        slope = np.where(alpha_row > 0, -right, np.where(alpha_row < 0, left, 0.5 * (left - right)))
        return back, self.dt * rho * slope


def _functional_value(fun: MeanFunctional, grid: Grid1D, rho: np.ndarray) -> float:
    if fun.bound == 0:
        return 0.0
    y = grid.trapezoid_weights @ (fun.feature(grid.nodes[:, None]) * rho)
    return float(fun.outer(y))


def _functional_gradient(fun: MeanFunctional, grid: Grid1D, rho: np.ndarray) -> np.ndarray:
    """Gradient of ``rho -> fun(rho)`` with respect to the nodal weights."""
    if fun.bound == 0:
        return np.zeros_like(rho)
    phi = fun.feature(grid.nodes[:, None])
    y = grid.trapezoid_weights @ (phi * rho)
    return fun.outer_d1(y) * phi * grid.trapezoid_weights


def _check_density(m0: DiscreteDensity) -> None:
    if abs(m0.mass - 1.0) > 1e-8:
        raise ValueError(f"initial density has mass {m0.mass}, expected 1")


def solve_fp(alpha: ControlField, m0: DiscreteDensity) -> MFTrajectory:
    _check_density(m0)
    if m0.grid != alpha.grid:
        raise ValueError("control and density grids differ")
    scheme = _FPScheme(alpha.grid, alpha.dt)
    scheme.check_cfl(alpha.values)
    rho = np.empty((alpha.n_steps + 1, alpha.grid.n_points))
    rho[0] = m0.weights
    for n in range(alpha.n_steps):
        rho[n + 1] = scheme.step(alpha.values[n], rho[n])
    return MFTrajectory(alpha.grid, alpha.times, rho)


def _group_cost_and_gradient(cfg: ModelConfig, grid: Grid1D, dt: float, alphas: np.ndarray,
                             rho0s: Sequence[np.ndarray], want_grad: bool = True):
    """Discrete cost of K groups sharing F and G, with its gradient in all controls.

    ``alphas`` has shape (K, n_t, M).
    """
    K, n_t, M = alphas.shape
    ham = cfg.hamiltonian
    x = grid.nodes[:, None]
    w = grid.trapezoid_weights
    scheme = _FPScheme(grid, dt)
    rhos = np.empty((K, n_t + 1, M))
    for k in range(K):
        rhos[k, 0] = rho0s[k]
        for n in range(n_t):
            rhos[k, n + 1] = scheme.step(alphas[k, n], rhos[k, n])
    total = rhos.sum(axis=0)
    running_L = ham.eval_l(x[None, None, :, :], alphas[..., None])  # (K, n_t, M)
    J = dt * float(np.sum(running_L * rhos[:, :-1] * w))
    fun_F, fun_G = cfg.cost.running, cfg.cost.terminal
    if fun_F.bound > 0:
        J += dt * sum(_functional_value(fun_F, grid, total[n]) for n in range(n_t))
    J += _functional_value(fun_G, grid, total[n_t])
    if not want_grad:
        return J, None, rhos
    dL = ham.grad_a_l(x[None, None, :, :], alphas[..., None])[..., 0]
    grad = np.empty_like(alphas)
    lam_T = _functional_gradient(fun_G, grid, total[n_t])
    for k in range(K):
        lam = lam_T.copy()
        for n in range(n_t - 1, -1, -1):
            back, g_alpha = scheme.adjoint_step(alphas[k, n], rhos[k, n], lam)
            grad[k, n] = dt * w * rhos[k, n] * dL[k, n] + g_alpha
            lam = back + dt * w * running_L[k, n]
            if fun_F.bound > 0:
                lam = lam + dt * _functional_gradient(fun_F, grid, total[n])
    return J, grad, rhos


def mfc_cost(alpha: ControlField, m0: DiscreteDensity, cfg: ModelConfig) -> float:
    """Left-endpoint-in-time, trapezoid-in-space cost along the FP trajectory, plus G."""
    _check_density(m0)
    _FPScheme(alpha.grid, alpha.dt).check_cfl(alpha.values)
    J, _, _ = _group_cost_and_gradient(cfg, alpha.grid, alpha.dt, alpha.values[None], [m0.weights], False)
    return J


def mfc_gradient(alpha: ControlField, m0: DiscreteDensity, cfg: ModelConfig) -> np.ndarray:
    _, g, _ = _group_cost_and_gradient(cfg, alpha.grid, alpha.dt, alpha.values[None], [m0.weights])
    return g[0]


# --- optimizers ---------------------------------------------------------------------


def default_time_steps(cfg: ModelConfig, grid: Grid1D, span: float, cfl: float = 0.9, min_steps: int = 40) -> int:
    dt_max = cfl * grid.spacing / (2 * cfg.hamiltonian.control_radius_R)
    steps = max(min_steps, int(math.ceil(span / dt_max)))
    return 4 * int(math.ceil(steps / 4))


def solve_adjoint_hjb(cfg: ModelConfig, grid: Grid1D, times: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Backward monotone solve of ``-u_t - u'' + H(x, u') = dF/dm(m_t)``, ``u(T) = dG/dm(m_T)``."""
    n_t = len(times) - 1
    dt = float(times[1] - times[0])
    stepper = BackwardHJBStepper(cfg.hamiltonian, grid, 1, 1, dt, diffusion=1.0, a0=0.0, gradient_scale=1.0)
    x = grid.nodes[:, None]
    fun_F, fun_G = cfg.cost.running, cfg.cost.terminal
    u = np.empty((n_t + 1, grid.n_points))

    def flat(fun, r):
        if fun.bound == 0:
            return np.zeros(grid.n_points)
        y = grid.trapezoid_weights @ (fun.feature(x) * r)
        return fun.flat_derivative_at_moment(y, x)

    u[n_t] = flat(fun_G, rho[n_t])
    for n in range(n_t - 1, -1, -1):
        source = flat(fun_F, rho[n]) if fun_F.bound > 0 else None
        u[n], _ = stepper.step(u[n + 1], source)
    return u


def _best_response(cfg: ModelConfig, grid: Grid1D, u: np.ndarray) -> np.ndarray:
    x = grid.nodes[:, None]
    R = cfg.hamiltonian.control_radius_R
    out = np.empty((u.shape[0] - 1, grid.n_points))
    for n in range(out.shape[0]):
        du = central_gradient(u[n + 1], grid.spacing)[0]
        out[n] = -cfg.hamiltonian.grad_p_h(x, du[:, None])[:, 0]
    return np.clip(out, -R, R)


def solve_mfc(cfg: ModelConfig, m0: DiscreteDensity, method: str = "fixed-point", t0: float = 0.0,
              n_time_steps: Optional[int] = None, max_iters: int = 500, tol: float = SOLVER_TOL,
              initial: Optional[np.ndarray] = None) -> MFCSolution:
    """Minimize the discrete cost over feedback controls on ``[t0, T]``.

    ``fixed-point`` alternates the backward HJB solve and the forward FP solve
    with damped control updates; ``direct`` runs bound-constrained L-BFGS on
    the exact discrete gradient. Both return their lowest-cost iterate.
    """
    if cfg.common_noise_a0 != 0:
        raise ValueError("the mean-field solver covers a0 = 0 only")
    if cfg.dim_d != 1:
        raise ValueError("the mean-field solver is one-dimensional")
    _check_density(m0)
    T = cfg.horizon_T
    if not 0 <= t0 < T:
        raise ValueError("t0 must lie in [0, T)")
    grid = m0.grid
    n_t = n_time_steps or default_time_steps(cfg, grid, T - t0)
    times = t0 + (T - t0) * np.arange(n_t + 1) / n_t
    dt = (T - t0) / n_t
    R = cfg.hamiltonian.control_radius_R
    alpha = np.zeros((n_t, grid.n_points)) if initial is None else np.array(initial, dtype=float)
    history: list = []

    def cost(a):
        return _group_cost_and_gradient(cfg, grid, dt, a[None], [m0.weights], False)

    if method == "fixed-point":
        J, _, rhos = cost(alpha)
        best = (J, alpha, rhos[0])
        k = 0
        converged = False
        it = 0
        for it in range(1, max_iters + 1):
            u = solve_adjoint_hjb(cfg, grid, times, best[2])
            target = _best_response(cfg, grid, u)
            weight = 2.0 / (k + 2)
            trial = (1 - weight) * best[1] + weight * target
            J_new, _, rhos = cost(trial)
            history.append({"iteration": it, "value": J_new, "weight": weight})
            if J_new <= best[0]:
                change = best[0] - J_new
                best = (J_new, trial, rhos[0])
                if change < tol:
                    converged = True
                    break
            else:
                k += 1  # restart from the best iterate with a smaller step
                if weight < 1e-6:
                    converged = True
                    break
        J, alpha, rho = best
    elif method == "direct":
        def fun(flat):
            a = flat.reshape(n_t, grid.n_points)
            J, g, _ = _group_cost_and_gradient(cfg, grid, dt, a[None], [m0.weights])
            history.append({"iteration": len(history) + 1, "value": J})
            return J, g[0].ravel()

        res = optimize.minimize(fun, alpha.ravel(), jac=True, method="L-BFGS-B",
                                bounds=[(-R, R)] * alpha.size,
                                options={"maxiter": max_iters, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 30})
        alpha = res.x.reshape(n_t, grid.n_points)
        J, _, rhos = cost(alpha)
        rho = rhos[0]
        it = int(res.nit)
        converged = bool(res.success)
    else:
        raise ValueError(f"unknown method {method!r}")
    traj = MFTrajectory(grid, times, rho)
    u = solve_adjoint_hjb(cfg, grid, times, rho)
    control = ControlField(grid, times, alpha, R)
    return MFCSolution(control, traj, float(J), u, method, it, converged, history)


def solve_mfc_best(cfg: ModelConfig, m0: DiscreteDensity, **kw) -> MFCSolution:
    """Fixed point followed by direct descent from its result; the lower value wins."""
    fp = solve_mfc(cfg, m0, "fixed-point", **kw)
    kw = {k: v for k, v in kw.items() if k != "initial"}
    direct = solve_mfc(cfg, m0, "direct", initial=fp.control.values, **kw)
    return direct if direct.value <= fp.value else fp


def running_cost(cfg: ModelConfig, sol: MFCSolution, upto_step: int) -> float:
    """Cost accumulated on the first ``upto_step`` time steps of a solution."""
    grid = sol.control.grid
    x = grid.nodes[:, None]
    w = grid.trapezoid_weights
    dt = sol.control.dt
    total = 0.0
    for n in range(upto_step):
        rho = sol.trajectory.weights[n]
        total += dt * float(np.sum(w * rho * cfg.hamiltonian.eval_l(x, sol.control.values[n][:, None])))
        total += dt * _functional_value(cfg.cost.running, grid, rho)
    return total


def dpp_check(cfg: ModelConfig, m0: DiscreteDensity, t1: float, n_time_steps: Optional[int] = None) -> dict:
    """Residual of ``U(0, m0) = cost on [0, t1] + U(t1, m_t1)`` (``t1`` snapped to the time grid)."""
    T = cfg.horizon_T
    if not 0 < t1 <= T:
        raise ValueError("t1 must lie in (0, T]")
    n_t = n_time_steps or default_time_steps(cfg, m0.grid, T)
    full = solve_mfc_best(cfg, m0, n_time_steps=n_t)
    j = int(round(t1 / T * n_t))
    if abs(j * T / n_t - t1) > 1e-12 * max(1.0, T):
        raise ValueError("t1 must lie on the time grid")
    head = running_cost(cfg, full, j)
    if j == n_t:
        tail = _functional_value(cfg.cost.terminal, m0.grid, full.trajectory.weights[n_t])
    else:
        m1 = DiscreteDensity(m0.grid, full.trajectory.weights[j] / full.trajectory.masses()[j])
        tail = solve_mfc_best(cfg, m1, t0=j * T / n_t, n_time_steps=n_t - j).value
    return {"residual": abs(full.value - (head + tail)), "value": full.value, "head": head, "tail": tail,
            "t1": j * T / n_t}


def group_split_value(cfg: ModelConfig, parts: Sequence, n_time_steps: Optional[int] = None,
                      max_iters: int = 500) -> float:
    """Minimize over one feedback per group; the groups share F and G through their sum."""
    arrays = [np.asarray(p.weights if isinstance(p, DiscreteDensity) else p, dtype=float) for p in parts]
    grid = parts[0].grid if isinstance(parts[0], DiscreteDensity) else None
    if grid is None:
        raise ValueError("parts must be DiscreteDensity objects on a shared grid")
    if any(p.grid != grid for p in parts):
        raise ValueError("parts must share one grid")
    if any(np.any(a < 0) for a in arrays):
        raise ValueError("parts must be nonnegative")
    total_mass = sum(float(grid.trapezoid_weights @ a) for a in arrays)
    if abs(total_mass - 1.0) > 1e-8:
        raise ValueError(f"part masses sum to {total_mass}, expected 1")
    if len(arrays) == 1:
        return solve_mfc(cfg, DiscreteDensity(grid, arrays[0]), "direct", n_time_steps=n_time_steps,
                         max_iters=max_iters).value
    T = cfg.horizon_T
    n_t = n_time_steps or default_time_steps(cfg, grid, T)
    dt = T / n_t
    K = len(arrays)
    R = cfg.hamiltonian.control_radius_R
    shape = (K, n_t, grid.n_points)

    def fun(flat):
        J, g, _ = _group_cost_and_gradient(cfg, grid, dt, flat.reshape(shape), arrays)
        return J, g.ravel()

    res = optimize.minimize(fun, np.zeros(int(np.prod(shape))), jac=True, method="L-BFGS-B",
                            bounds=[(-R, R)] * int(np.prod(shape)),
                            options={"maxiter": max_iters, "ftol": 1e-15, "gtol": 1e-11, "maxcor": 30})
    return float(res.fun)


# --- reduced oracle for mean-structured models ---------------------------------------


@dataclass
class ReducedSolution:
    grid: Grid1D
    times: np.ndarray
    values: np.ndarray  # (n_t + 1, M)

    def spline(self) -> RectBivariateSpline:
        return RectBivariateSpline(self.times, self.grid.nodes, self.values, kx=3, ky=3)


def _require_mean_structured(cfg: ModelConfig) -> None:
    if not cfg.mean_structured:
        raise ValueError("model is not mean-structured (need H = |p|^2 and costs of the mean)")


def solve_reduced(cfg: ModelConfig, viscosity: float, y_lo: float, y_hi: float, n_points: int,
                  n_steps: Optional[int] = None) -> ReducedSolution:
    """Monotone scheme for ``-w_t - nu w'' + H(w') = f(y)``, ``w(T) = g(y)`` on ``[y_lo, y_hi]``."""
    _require_mean_structured(cfg)
    if viscosity < 0:
        raise ValueError("viscosity must be >= 0")
    grid = Grid1D(y_lo, y_hi, n_points)
    T = cfg.horizon_T
    if n_steps is None:
        n_steps = max(10, int(math.ceil(T / (0.9 * grid.spacing / cfg.hamiltonian.control_radius_R))))
    dt = T / n_steps
    stepper = BackwardHJBStepper(cfg.hamiltonian, grid, 1, 1, dt, diffusion=viscosity, gradient_scale=1.0)
    y = grid.nodes
    fun_F, fun_G = cfg.cost.running, cfg.cost.terminal
    source = np.asarray(fun_F.outer(y), dtype=float) if fun_F.bound > 0 else None
    W = np.empty((n_steps + 1, n_points))
    W[n_steps] = fun_G.outer(y)
    for n in range(n_steps - 1, -1, -1):
        W[n], _ = stepper.step(W[n + 1], source)
    return ReducedSolution(grid, T * np.arange(n_steps + 1) / n_steps, W)


def reduced_half_width(cfg: ModelConfig, viscosity: float) -> float:
    T = cfg.horizon_T
    return cfg.hamiltonian.control_radius_R * T + 8 * math.sqrt(2 * viscosity * T) + 2.0


def reduced_oracle(cfg: ModelConfig, viscosity: float, y0: float, spacing: float = 0.005) -> float:
    """``w(0, y0)`` for the reduced equation, Richardson-extrapolated over two grids."""
    _require_mean_structured(cfg)
    if cfg.cost.terminal.bound == 0 and cfg.cost.running.bound == 0:
        return 0.0
    Y = reduced_half_width(cfg, viscosity)
    cells = 2 * int(math.ceil(Y / (2 * spacing)))
    coarse = solve_reduced(cfg, viscosity, y0 - Y, y0 + Y, cells + 1)
    fine = solve_reduced(cfg, viscosity, y0 - Y, y0 + Y, 2 * cells + 1, 2 * (len(coarse.times) - 1))
    wc = coarse.values[0][cells // 2]
    wf = fine.values[0][cells]
    return float(2 * wf - wc)


def projection_residual(cfg: ModelConfig, N: int, sample_states: int, seed: int, spacing: float = 0.005,
                        fd_step: float = 0.02, y_range: float = 2.0) -> dict:
    """Residual of ``U^N(t, x) = w(t, mean x)`` (``w``: zero-viscosity reduced solution) in the
    N-particle equation, evaluated by finite differences at sampled states."""
    _require_mean_structured(cfg)
    if cfg.common_noise_a0 != 0:
        raise ValueError("projection residual is defined for a0 = 0")
    T = cfg.horizon_T
    d = cfg.dim_d
    if cfg.cost.terminal.bound == 0 and cfg.cost.running.bound == 0:
        return {"max_abs": 0.0, "N": N, "residuals": np.zeros(sample_states)}
    Y = reduced_half_width(cfg, 0.0) + y_range
    cells = 2 * int(math.ceil(Y / (2 * spacing)))
    coarse = solve_reduced(cfg, 0.0, -Y, Y, cells + 1)
    fine = solve_reduced(cfg, 0.0, -Y, Y, 2 * cells + 1, 2 * (len(coarse.times) - 1))
    extrap = 2 * fine.values[::2, ::2] - coarse.values
    w = RectBivariateSpline(coarse.times, coarse.grid.nodes, extrap, kx=3, ky=3)

    rng_shared = make_rng(seed, 0)
    t = rng_shared.uniform(fd_step, T - 0.1 * T, size=sample_states)
    y = rng_shared.uniform(-y_range, y_range, size=sample_states)
    rng = make_rng(seed, N)
    pert = rng.standard_normal((sample_states, N, d))
    pert[:, :, 0] -= pert[:, :, 0].mean(axis=1, keepdims=True)
    x = pert.copy()
    x[:, :, 0] += y[:, None]
    ham = cfg.hamiltonian

    def U(tt, xx):
        return w(tt, xx[..., 0].mean(axis=-1), grid=False)

    e = fd_step
    ut = (U(t + e, x) - U(t - e, x)) / (2 * e)
    lap = np.zeros(sample_states)
    ham_sum = np.zeros(sample_states)
    for k in range(N):
        grad_k = np.zeros((sample_states, d))
        for c in range(d):
            step = np.zeros((N, d))
            step[k, c] = e
            up, dn, mid = U(t, x + step), U(t, x - step), U(t, x)
            lap += (up - 2 * mid + dn) / e ** 2
            grad_k[:, c] = (up - dn) / (2 * e)
        ham_sum += ham.eval_h(x[:, k, :], N * grad_k)
    f = cfg.cost.running.on_clouds(x) if cfg.cost.running.bound > 0 else 0.0
    residual = -ut - lap + ham_sum / N - f
    return {"max_abs": float(np.max(np.abs(residual))), "N": N, "residuals": residual}
