"""Problem data: Hamiltonian/Lagrangian pairs, mean-field costs and a model catalog.

Conventions: points, covectors and controls are arrays whose last axis has
length ``d``; callables broadcast over the leading axes and return arrays of
the broadcast leading shape (scalars) or with a trailing ``d`` axis (vectors).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .measures import EmpiricalMeasure, Measure, w1_exact_1d, w1_assignment
from .rng import make_rng

Array = np.ndarray
ScalarFn = Callable[[Array, Array], Array]
VectorFn = Callable[[Array, Array], Array]


@dataclass(frozen=True)
class HamiltonianModel:
    """Closed-form ``H(x, p)``, its Legendre dual ``L(x, a)`` and derivatives.

    ``convexity_c`` is the lower bound on ``D_pp H`` claimed on ``|p| <= convexity_radius``.
    ``separable`` means ``H(x, p) = sum_i h_i(x, p_i)``, which lets the grid
    solvers use an exact componentwise Godunov flux.
    """

    dim: int
    eval_h: ScalarFn
    grad_p_h: VectorFn
    grad_x_h: VectorFn
    eval_l: ScalarFn
    grad_a_l: VectorFn
    growth_c: float
    growth_C: float
    control_radius_R: float
    convexity_c: float = 1.0
    convexity_radius: float = 10.0
    separable: bool = True
    name: str = "custom"
    # Optional closed-form monotone flux H_G(x, p_back, p_fwd) (e.g. Engquist-Osher); the
    # grid solvers fall back to a generic construction when it is absent.
    upwind_h: Optional[Callable[[Array, Array, Array], Array]] = None
    # Optional d = 1 version of the same flux writing into ``out``:
    # (x_scalar, p_back, p_fwd, out, scratch) -> None, all arrays without a trailing d axis.
    upwind_h_into: Optional[Callable[..., None]] = None

    def __post_init__(self):
        if self.growth_c <= 0 or self.growth_C <= 0 or self.control_radius_R <= 0:
            raise ValueError("growth constants and control radius must be positive")

    def minimizer_p(self, x: Array) -> Array:
        """argmin_p H(x, p); ``D_p H = 0`` there, i.e. the optimal control is 0."""
        x = np.asarray(x, dtype=float)
        return -self.grad_a_l(x, np.zeros_like(x))

    def feedback(self, x: Array, p: Array) -> Array:
        return -self.grad_p_h(x, p)


def legendre_transform(h: HamiltonianModel, x, a, p_radius: float, p_steps: int = 41,
                       tol: float = 1e-8, max_rounds: int = 200) -> float:
    """``sup_p [-a.p - H(x, p)]`` by grid search with local zooming.

    Raises ``ValueError`` when the maximizer sits on the outer boundary of the
    initial box, i.e. the radius does not contain it.
    """
    if p_steps < 3:
        raise ValueError("p_steps must be >= 3")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    d = x.shape[0]
    center = np.zeros(d)
    radius = float(p_radius)
    best = -np.inf
    for round_ in range(max_rounds):
        axes = [np.linspace(c - radius, c + radius, p_steps) for c in center]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        vals = -mesh @ a - h.eval_h(x[None, :], mesh)
        k = int(np.argmax(vals))
        idx = np.unravel_index(k, (p_steps,) * d)
        on_edge = any(i in (0, p_steps - 1) for i in idx)
        if round_ == 0 and on_edge:
            raise ValueError(f"maximizer on the boundary of the p-box of radius {p_radius}; increase p_radius")
        value = float(vals[k])
        if abs(value - best) < tol and radius < 1e-6:
            return value
        best = value
        center = mesh[k]
        radius = 2.0 * radius / (p_steps - 1)
    return best


# --- mean-field costs --------------------------------------------------------


@dataclass(frozen=True)
class MeanFunctional:
    """``m -> outer(int feature dm)`` with a scalar feature of the position.

    The default feature is the first coordinate, so the functional depends on
    the measure only through its mean.
    """

    outer: Callable[[Array], Array]
    outer_d1: Callable[[Array], Array]
    outer_d2: Callable[[Array], Array]
    bound: float
    outer_lipschitz: float
    feature: Callable[[Array], Array] = field(default=lambda x: x[..., 0])
    feature_grad: Callable[[Array], Array] = field(default=None)
    feature_lipschitz: float = 1.0
    name: str = "mean"

    def _feature_grad(self, x: Array) -> Array:
        if self.feature_grad is not None:
            return self.feature_grad(x)
        g = np.zeros_like(x)
        g[..., 0] = 1.0
        return g

    @property
    def lipschitz(self) -> float:
        """Bound on ``|D_m G|`` and hence the d1-Lipschitz constant."""
        return self.outer_lipschitz * self.feature_lipschitz

    def moment_of(self, m: Measure) -> float:
        return m.expect(self.feature)

    def __call__(self, m: Measure) -> float:
        return float(self.outer(self.moment_of(m)))

    def on_clouds(self, points: Array) -> Array:
        """Values at the empirical measures of ``points[..., N, d]``."""
        return self.outer(self.feature(np.asarray(points, dtype=float)).mean(axis=-1))

    def flat_derivative(self, m: Measure, x: Array) -> Array:
        y = self.moment_of(m)
        return self.outer_d1(y) * (self.feature(np.asarray(x, dtype=float)) - y)

    def flat_derivative_at_moment(self, y: float, x: Array) -> Array:
        return self.outer_d1(y) * (self.feature(np.asarray(x, dtype=float)) - y)

    def l_derivative(self, m: Measure, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return self.outer_d1(self.moment_of(m)) * self._feature_grad(x)


def zero_functional() -> MeanFunctional:
    z = lambda y: np.zeros_like(np.asarray(y, dtype=float))
    return MeanFunctional(z, z, z, bound=0.0, outer_lipschitz=0.0, name="zero")


def arctan_of_mean(scale: float = 1.0, shift: float = 0.0) -> MeanFunctional:
    return MeanFunctional(
        outer=lambda y: scale * np.arctan(np.asarray(y) - shift),
        outer_d1=lambda y: scale / (1 + (np.asarray(y) - shift) ** 2),
        outer_d2=lambda y: -2 * scale * (np.asarray(y) - shift) / (1 + (np.asarray(y) - shift) ** 2) ** 2,
        bound=abs(scale) * math.pi / 2,
        outer_lipschitz=abs(scale),
        name=f"{scale}*arctan(mean-{shift})",
    )


def cos_of_mean(scale: float = 1.0) -> MeanFunctional:
    return MeanFunctional(
        outer=lambda y: scale * np.cos(y),
        outer_d1=lambda y: -scale * np.sin(y),
        outer_d2=lambda y: -scale * np.cos(y),
        bound=abs(scale),
        outer_lipschitz=abs(scale),
        name=f"{scale}*cos(mean)",
    )


@dataclass(frozen=True)
class MeanFieldCost:
    running: MeanFunctional
    terminal: MeanFunctional

    def eval_f(self, m: Measure) -> float:
        return self.running(m)

    def eval_g(self, m: Measure) -> float:
        return self.terminal(m)

    def flat_df(self, m: Measure, x) -> Array:
        return self.running.flat_derivative(m, x)

    def flat_dg(self, m: Measure, x) -> Array:
        return self.terminal.flat_derivative(m, x)

    def grad_m_f(self, m: Measure, x) -> Array:
        return self.running.l_derivative(m, x)

    def grad_m_g(self, m: Measure, x) -> Array:
        return self.terminal.l_derivative(m, x)


@dataclass(frozen=True)
class ModelConfig:
    dim_d: int
    horizon_T: float
    common_noise_a0: float
    hamiltonian: HamiltonianModel
    cost: MeanFieldCost
    label: str = "custom"
    # True when H(x, p) = |p|^2 and both costs are functions of the first-coordinate mean.
    mean_structured: bool = False

    def __post_init__(self):
        if int(self.dim_d) != self.dim_d or self.dim_d < 1:
            raise ValueError(f"dim_d must be a positive integer, got {self.dim_d}")
        if not self.horizon_T > 0:
            raise ValueError(f"horizon_T must be > 0, got {self.horizon_T}")
        if not self.common_noise_a0 >= 0:
            raise ValueError(f"common_noise_a0 must be >= 0, got {self.common_noise_a0}")
        if self.hamiltonian.dim != self.dim_d:
            raise ValueError("hamiltonian dimension does not match dim_d")

    def with_costs(self, running=None, terminal=None, label=None) -> "ModelConfig":
        cost = MeanFieldCost(running or self.cost.running, terminal or self.cost.terminal)
        return ModelConfig(self.dim_d, self.horizon_T, self.common_noise_a0, self.hamiltonian, cost,
                           label or self.label, self.mean_structured)

    def with_noise(self, a0: float) -> "ModelConfig":
        return ModelConfig(self.dim_d, self.horizon_T, a0, self.hamiltonian, self.cost, self.label,
                           self.mean_structured)

    def with_horizon(self, T: float) -> "ModelConfig":
        return ModelConfig(self.dim_d, T, self.common_noise_a0, self.hamiltonian, self.cost, self.label,
                           self.mean_structured)


# --- catalog -----------------------------------------------------------------


def _shifted_quadratic_flux_into(shift: Optional[Callable[[Array], Array]]):
    """In-place flux ``max(p_b + s, 0)^2 + min(p_f + s, 0)^2 - s^2`` for ``H = (p + s)^2 - s^2``."""

    def flux(x, pb, pf, out, scratch):
        if shift is None:
            np.maximum(pb, 0.0, out=out)
            np.minimum(pf, 0.0, out=scratch)
        else:
            s = shift(x)
            np.add(pb, s, out=out)
            np.maximum(out, 0.0, out=out)
            np.add(pf, s, out=scratch)
            np.minimum(scratch, 0.0, out=scratch)
        np.square(out, out=out)
        np.square(scratch, out=scratch)
        out += scratch
        if shift is not None:
            out -= s * s

    return flux


def quadratic_hamiltonian(d: int, control_radius: float) -> HamiltonianModel:
    """``H = |p|^2``, ``L = |a|^2 / 4``."""
    return HamiltonianModel(
        dim=d,
        eval_h=lambda x, p: np.sum(np.asarray(p) ** 2, axis=-1) + 0.0 * np.sum(x, axis=-1),
        grad_p_h=lambda x, p: 2.0 * np.asarray(p) + 0.0 * np.asarray(x),
        grad_x_h=lambda x, p: np.zeros(np.broadcast_shapes(np.shape(x), np.shape(p))),
        eval_l=lambda x, a: 0.25 * np.sum(np.asarray(a) ** 2, axis=-1) + 0.0 * np.sum(x, axis=-1),
        grad_a_l=lambda x, a: 0.5 * np.asarray(a) + 0.0 * np.asarray(x),
        growth_c=1.0,
        growth_C=1.0,
        control_radius_R=control_radius,
        convexity_c=2.0,
        name="|p|^2",
        upwind_h=lambda x, pb, pf: np.sum(np.square(np.maximum(pb, 0.0)) + np.square(np.minimum(pf, 0.0)), axis=-1),
        upwind_h_into=_shifted_quadratic_flux_into(None),
    )


def drift_hamiltonian(d: int, b: float, control_radius: float) -> HamiltonianModel:
    """``H = |p|^2 + V(x).p`` with ``V = b tanh`` componentwise; ``L = |a + V|^2 / 4``."""
    V = lambda x: b * np.tanh(np.asarray(x, dtype=float))
    dV = lambda x: b / np.cosh(np.asarray(x, dtype=float)) ** 2
    return HamiltonianModel(
        dim=d,
        eval_h=lambda x, p: np.sum(np.asarray(p) ** 2 + V(x) * p, axis=-1),
        grad_p_h=lambda x, p: 2.0 * np.asarray(p) + V(x),
        grad_x_h=lambda x, p: dV(x) * np.asarray(p),
        eval_l=lambda x, a: 0.25 * np.sum((np.asarray(a) + V(x)) ** 2, axis=-1),
        grad_a_l=lambda x, a: 0.5 * (np.asarray(a) + V(x)),
        growth_c=0.5,
        growth_C=1.0 + b * b,
        control_radius_R=control_radius,
        convexity_c=2.0,
        name=f"|p|^2+{b}tanh(x).p",
        # |p|^2 + V p = (p + V/2)^2 - V^2/4 is minimized at p = -V/2
        upwind_h=lambda x, pb, pf: np.sum(np.square(np.maximum(pb + V(x) / 2, 0.0))
                                          + np.square(np.minimum(pf + V(x) / 2, 0.0)) - V(x) ** 2 / 4, axis=-1),
        upwind_h_into=_shifted_quadratic_flux_into(lambda x: V(x) / 2),
    )


BUILTIN_MODELS = ("quadratic-mean", "quadratic-drift", "nonconvex-mean")

_DEFAULTS = {
    "quadratic-mean": {"T": 0.5, "a0": 0.0, "d": 1, "g_scale": 1.0, "g_shift": 0.0},
    "quadratic-drift": {"T": 0.5, "a0": 0.0, "d": 1, "b": 0.5, "f_scale": 0.5, "g_scale": 1.0},
    "nonconvex-mean": {"T": 1.0, "a0": 0.0, "d": 1, "g_scale": 1.0},
}


def builtin_model(name: str, params: Optional[dict] = None) -> ModelConfig:
    """Catalog models.

    * ``quadratic-mean``: H = |p|^2, F = 0, G(m) = g_scale * arctan(mean - g_shift).
    * ``quadratic-drift``: H = |p|^2 + b tanh(x).p, F = f_scale cos(mean), G = g_scale arctan(mean).
    * ``nonconvex-mean``: H = |p|^2, F = 0, G = -g_scale cos(mean); its limit value is not smooth
      once ``2 T g_scale > 1``.

    "mean" is the mean of the first coordinate.
    """
    if name not in _DEFAULTS:
        raise ValueError(f"unknown model {name!r}; choose from {BUILTIN_MODELS}")
    params = dict(params or {})
    unknown = set(params) - set(_DEFAULTS[name])
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    p = {**_DEFAULTS[name], **params}
    T, a0, d = float(p["T"]), float(p["a0"]), p["d"]
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    d = int(d)
    if not T > 0:
        raise ValueError("T must be > 0")
    if a0 < 0:
        raise ValueError("a0 must be >= 0")
    g_scale = float(p["g_scale"])
    if not np.isfinite(g_scale) or g_scale < 0:
        raise ValueError("g_scale must be a finite nonnegative number")

    if name == "quadratic-mean":
        # |D V^N| <= sup|g'| (no running cost), and the feedback is -2p
        R = max(2.0 * g_scale, 1e-3)
        cost = MeanFieldCost(zero_functional(), arctan_of_mean(g_scale, float(p["g_shift"])))
        return ModelConfig(d, T, a0, quadratic_hamiltonian(d, R), cost, name, mean_structured=True)
    if name == "nonconvex-mean":
        R = max(2.0 * g_scale, 1e-3)
        cost = MeanFieldCost(zero_functional(), cos_of_mean(-g_scale))
        return ModelConfig(d, T, a0, quadratic_hamiltonian(d, R), cost, name, mean_structured=True)
    b, f_scale = float(p["b"]), float(p["f_scale"])
    if b < 0 or f_scale < 0:
        raise ValueError("b and f_scale must be nonnegative")
    # Gronwall bound on |D V^N| with |D_x H| <= b |p|, then |alpha| <= 2|p| + b
    R = max(2.0 * (g_scale + T * f_scale) * math.exp(b * T) + b, 1e-3)
    cost = MeanFieldCost(cos_of_mean(f_scale), arctan_of_mean(g_scale))
    return ModelConfig(d, T, a0, drift_hamiltonian(d, b, R), cost, name, mean_structured=False)


# --- assumption checker --------------------------------------------------------


def _random_measure(rng, d: int, box: float) -> EmpiricalMeasure:
    n = int(rng.integers(1, 8))
    return EmpiricalMeasure(rng.uniform(-box, box, size=(n, d)))


def _d1(m1: EmpiricalMeasure, m2: EmpiricalMeasure) -> float:
    if m1.dim == 1:
        return w1_exact_1d(m1, m2)
    return w1_assignment(EmpiricalMeasure(np.repeat(m1.points, m2.size, axis=0)),
                         EmpiricalMeasure(np.tile(m2.points, (m1.size, 1))))


def check_assumptions(cfg: ModelConfig, sample_count: int, seed: int, box: float = 5.0,
                      tol: float = 1e-6) -> list[dict]:
    """Randomized checks of the standing assumptions.

    Returns a JSON-serializable list of ``{"name", "passed", "witness", "detail"}``
    records; a failing record carries the sample that violated it.
    """
    if sample_count < 100:
        raise ValueError(f"sample_count must be >= 100, got {sample_count}")
    rng = make_rng(seed, 0)
    h = cfg.hamiltonian
    d = cfg.dim_d
    n = int(sample_count)
    x = rng.uniform(-box, box, size=(n, d))
    # covectors spread over several scales so that growth failures at large |p| are seen
    p = rng.standard_normal((n, d)) * np.exp(rng.uniform(np.log(0.1), np.log(100.0), size=(n, 1)))
    a = rng.uniform(-h.control_radius_R, h.control_radius_R, size=(n, d))
    report: list[dict] = []

    def record(name, ok_mask, witness_fn, detail=""):
        ok_mask = np.asarray(ok_mask)
        bad = np.flatnonzero(~ok_mask)
        entry = {"name": name, "passed": bool(bad.size == 0), "witness": None, "detail": detail}
        if bad.size:
            entry["witness"] = witness_fn(int(bad[0]))
        report.append(entry)

    Hxp = h.eval_h(x, p)
    pn = np.linalg.norm(p, axis=1)
    lower = -h.growth_C + h.growth_c * pn ** 2 <= Hxp + tol
    upper = Hxp <= h.growth_C + pn ** 2 / h.growth_c + tol
    record("growth", lower & upper,
           lambda i: {"x": x[i].tolist(), "p": p[i].tolist(), "|p|": float(pn[i]), "H": float(Hxp[i])},
           "-C + c|p|^2 <= H(x,p) <= C + |p|^2/c")

    gx = np.linalg.norm(h.grad_x_h(x, p), axis=-1)
    record("x-gradient", gx <= h.growth_C * (pn + 1) + tol,
           lambda i: {"x": x[i].tolist(), "p": p[i].tolist(), "|D_xH|": float(gx[i])},
           "|D_x H| <= C(|p|+1)")

    # local strict convexity: second difference along random unit xi for |p| <= R
    pr = rng.uniform(-1, 1, size=(n, d))
    pr *= (h.convexity_radius * rng.random((n, 1))) / np.maximum(np.linalg.norm(pr, axis=1, keepdims=True), 1e-12)
    xi = rng.standard_normal((n, d))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    s = 1e-3
    second = (h.eval_h(x, pr + s * xi) - 2 * h.eval_h(x, pr) + h.eval_h(x, pr - s * xi)) / s ** 2
    record("local-convexity", second >= h.convexity_c - 1e-4 * max(1.0, h.convexity_c),
           lambda i: {"x": x[i].tolist(), "p": pr[i].tolist(), "xi": xi[i].tolist(), "second_difference": float(second[i])},
           "D_pp H >= c_R on |p| <= R")

    # Legendre duality, at a modest number of points because each is a search
    k = min(n, 100)
    dual_ok = np.ones(k, dtype=bool)
    dual_gap = np.zeros(k)
    for i in range(k):
        radius = 2.0 * (np.linalg.norm(a[i]) + h.control_radius_R + 1.0)
        try:
            val = legendre_transform(h, x[i], a[i], radius)
        except ValueError:
            dual_ok[i] = False
            continue
        dual_gap[i] = abs(val - float(h.eval_l(x[i], a[i])))
        dual_ok[i] = dual_gap[i] <= 1e-6
    record("legendre-duality", dual_ok,
           lambda i: {"x": x[i].tolist(), "a": a[i].tolist(), "gap": float(dual_gap[i])},
           "L(x,a) = sup_p(-a.p - H(x,p))")

    # closed-form derivatives against central differences
    e = 1e-5
    fd_p = np.zeros((k, d))
    fd_a = np.zeros((k, d))
    fd_x = np.zeros((k, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = e
        fd_p[:, j] = (h.eval_h(x[:k], p[:k] + step) - h.eval_h(x[:k], p[:k] - step)) / (2 * e)
        fd_x[:, j] = (h.eval_h(x[:k] + step, p[:k]) - h.eval_h(x[:k] - step, p[:k])) / (2 * e)
        fd_a[:, j] = (h.eval_l(x[:k], a[:k] + step) - h.eval_l(x[:k], a[:k] - step)) / (2 * e)
    scale = 1 + np.abs(p[:k]).max(axis=1, keepdims=True) ** 2
    err_p = np.abs(fd_p - h.grad_p_h(x[:k], p[:k])).max(axis=1) / scale[:, 0]
    err_x = np.abs(fd_x - h.grad_x_h(x[:k], p[:k])).max(axis=1) / scale[:, 0]
    err_a = np.abs(fd_a - h.grad_a_l(x[:k], a[:k])).max(axis=1)
    record("derivatives", (err_p < 1e-5) & (err_x < 1e-5) & (err_a < 1e-5),
           lambda i: {"x": x[i].tolist(), "p": p[i].tolist(), "a": a[i].tolist(),
                      "err_p": float(err_p[i]), "err_x": float(err_x[i]), "err_a": float(err_a[i])},
           "grad_p_h, grad_x_h, grad_a_l match central differences")

    # costs: boundedness, normalization of the flat derivative, d1-Lipschitz bound
    for label, fun in (("F", cfg.cost.running), ("G", cfg.cost.terminal)):
        ms = [_random_measure(rng, d, box) for _ in range(min(n, 200))]
        vals = np.array([fun(m) for m in ms])
        record(f"{label}-bounded", np.abs(vals) <= fun.bound + 1e-12,
               lambda i: {"points": ms[i].points.tolist(), "value": float(vals[i])}, f"|{label}| <= {fun.bound}")
        norms = np.array([m.expect(lambda z: fun.flat_derivative(m, z)) for m in ms])
        record(f"{label}-normalized", np.abs(norms) <= 1e-12,
               lambda i: {"points": ms[i].points.tolist(), "integral": float(norms[i])},
               "int (flat derivative) dm = 0")
        pairs = [(ms[i], _random_measure(rng, d, box)) for i in range(len(ms))]
        lhs = np.array([abs(fun(m1) - fun(m2)) for m1, m2 in pairs])
        rhs = np.array([fun.lipschitz * _d1(m1, m2) for m1, m2 in pairs])
        record(f"{label}-lipschitz", lhs <= rhs + 1e-12,
               lambda i: {"m": pairs[i][0].points.tolist(), "m_prime": pairs[i][1].points.tolist(),
                          "difference": float(lhs[i]), "bound": float(rhs[i])},
               "|F(m)-F(m')| <= |D_m F| d1(m,m')")
        # second derivative of the outer function against differences of the first
        y = rng.uniform(-box, box, size=200)
        fd2 = (fun.outer_d1(y + 1e-5) - fun.outer_d1(y - 1e-5)) / 2e-5
        fd1 = (fun.outer(y + 1e-5) - fun.outer(y - 1e-5)) / 2e-5
        ok = (np.abs(fd1 - fun.outer_d1(y)) < 1e-6) & (np.abs(fd2 - fun.outer_d2(y)) < 1e-6)
        record(f"{label}-derivatives", ok, lambda i: {"moment": float(y[i])}, "outer derivatives up to order 2")
    return report


def report_passed(report: list[dict]) -> bool:
    return all(r["passed"] for r in report)
