from __future__ import annotations

import numpy as np
import pytest

from oracles import cole_hopf_value, hopf_lax_value
from mfcrate.meanfield import (CFLError, ControlField, dpp_check, group_split_value, mfc_cost, mfc_gradient,
                               projection_residual, reduced_oracle, solve_fp, solve_mfc, solve_mfc_best)
from mfcrate.measures import DiscreteDensity, Grid1D, moment
from mfcrate.model import builtin_model

# constant-control (Hopf-Lax) value of the arctan model at mean 0.25, T = 0.5
U_AT_QUARTER = -0.18315872879836942
# zero-viscosity reduced value at mean 0
U_AT_ZERO = -0.3659810893165679
# nonconvex model, T = 1, mean 0.3
U_NONCONVEX = -0.9850041745589639
# viscous reduced values at mean 0 for viscosities 1/2 and 1/16
W_HALF = -0.26993718604411276
W_SIXTEENTH = -0.3509875909337616

GRID = Grid1D(-6.0, 6.0, 81)


@pytest.fixture(scope="module")
def cfg():
    return builtin_model("quadratic-mean")


def gaussian(mean=0.25, var=0.25, grid=GRID):
    return DiscreteDensity.gaussian(grid, mean, var)


def test_fp_conserves_mass_and_positivity():
    rng = np.random.default_rng(0)
    alpha = ControlField(GRID, np.linspace(0, 0.5, 41), rng.uniform(-1, 1, (40, GRID.n_points)))
    traj = solve_fp(alpha, gaussian())
    np.testing.assert_allclose(traj.masses(), 1.0, atol=1e-12)
    assert traj.weights.min() >= 0.0


def test_fp_heat_kernel_variance():
    grid = Grid1D(-10, 10, 401)
    for steps in (100, 200):
        traj = solve_fp(ControlField.constant(grid, 1.0, steps), gaussian(0.0, 0.5, grid))
        var = moment(traj.density(steps), 2)
        assert var == pytest.approx(0.5 + 2.0, abs=5e-3)


def test_fp_constant_drift_moves_mean():
    grid = Grid1D(-8, 8, 321)
    traj = solve_fp(ControlField.constant(grid, 1.0, 100, value=0.7), gaussian(0.0, 0.5, grid))
    assert traj.density(100).mean()[0] == pytest.approx(0.7, abs=1e-3)


def test_fp_cfl_error():
    with pytest.raises(CFLError):
        solve_fp(ControlField.constant(GRID, 1.0, 2, value=50.0), gaussian())


def test_cost_examples(cfg):
    zero_cfg = builtin_model("quadratic-mean", {"g_scale": 0.0})
    assert mfc_cost(ControlField.constant(GRID, 0.5, 20), gaussian(), zero_cfg) == 0.0
    # constant control v: cost T v^2 / 4 plus G of the transported mean
    J = mfc_cost(ControlField.constant(GRID, 0.5, 40, value=0.4), gaussian(), zero_cfg)
    assert J == pytest.approx(0.5 * 0.16 / 4, rel=1e-3)


def test_adjoint_gradient_matches_differences(cfg):
    rng = np.random.default_rng(1)
    alpha = ControlField(GRID, np.linspace(0, 0.5, 21), rng.uniform(-0.5, 0.5, (20, GRID.n_points)))
    m0 = gaussian()
    g = mfc_gradient(alpha, m0, cfg)
    e = 1e-6
    for n, i in ((0, 40), (5, 42), (19, 38), (10, 10)):
        up, dn = alpha.values.copy(), alpha.values.copy()
        up[n, i] += e
        dn[n, i] -= e
        fd = (mfc_cost(ControlField(GRID, alpha.times, up), m0, cfg)
              - mfc_cost(ControlField(GRID, alpha.times, dn), m0, cfg)) / (2 * e)
        assert g[n, i] == pytest.approx(fd, abs=1e-8)


def test_solver_zero_cost_and_reference(cfg):
    zero = solve_mfc(builtin_model("quadratic-mean", {"g_scale": 0.0}), gaussian())
    assert zero.value == 0.0
    sol = solve_mfc(cfg, gaussian())
    assert sol.value == pytest.approx(U_AT_QUARTER, abs=1e-3)
    assert mfc_cost(sol.control, gaussian(), cfg) == pytest.approx(sol.value, abs=1e-10)
    best = solve_mfc_best(cfg, gaussian())
    assert best.value <= sol.value and sol.value - best.value <= 1e-4
    rng = np.random.default_rng(2)
    R = cfg.hamiltonian.control_radius_R
    for _ in range(5):
        rand = ControlField(GRID, sol.control.times, rng.uniform(-R, R, sol.control.values.shape) * 0.3)
        assert mfc_cost(rand, gaussian(), cfg) >= best.value - 1e-10


def test_solver_validation(cfg):
    with pytest.raises(ValueError):
        solve_mfc(cfg.with_noise(0.5), gaussian())
    with pytest.raises(ValueError):
        solve_mfc(cfg, gaussian(), method="newton")
    with pytest.raises(ValueError):
        solve_mfc(cfg, DiscreteDensity(GRID, 2 * gaussian().weights, unit_mass=False))


def test_dpp_at_horizon_is_trivial(cfg):
    res = dpp_check(cfg, gaussian(), cfg.horizon_T, n_time_steps=40)
    assert res["residual"] <= 1e-12


def test_group_split_cases(cfg):
    m0 = gaussian()
    whole = solve_mfc(cfg, m0, "direct").value
    assert group_split_value(cfg, [m0]) == pytest.approx(whole, abs=1e-12)
    zero_cfg = builtin_model("quadratic-mean", {"g_scale": 0.0})
    half = DiscreteDensity(GRID, 0.5 * m0.weights, unit_mass=False)
    assert group_split_value(zero_cfg, [half, half]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        group_split_value(cfg, [half])


def test_reduced_oracle_against_closed_forms(cfg):
    assert reduced_oracle(cfg, 0.5, 0.0) == pytest.approx(W_HALF, abs=1e-5)
    assert reduced_oracle(cfg, 1 / 16, 0.0) == pytest.approx(W_SIXTEENTH, abs=1e-5)
    assert reduced_oracle(cfg, 0.0, 0.0) == pytest.approx(U_AT_ZERO, abs=1e-5)
    assert reduced_oracle(cfg, 0.0, 0.25) == pytest.approx(U_AT_QUARTER, abs=1e-5)
    nonconvex = builtin_model("nonconvex-mean")
    assert reduced_oracle(nonconvex, 0.0, 0.3) == pytest.approx(U_NONCONVEX, abs=1e-4)
    assert reduced_oracle(builtin_model("quadratic-mean", {"g_scale": 0.0}), 0.3, 0.0) == 0.0
    with pytest.raises(ValueError):
        reduced_oracle(builtin_model("quadratic-drift"), 0.0, 0.0)


def test_frozen_constants_match_independent_oracles():
    assert cole_hopf_value(np.arctan, 0.5, 0.5, 0.0) == pytest.approx(W_HALF, abs=1e-12)
    assert hopf_lax_value(np.arctan, 0.5, 0.0) == pytest.approx(U_AT_ZERO, abs=1e-12)
    assert hopf_lax_value(lambda y: -np.cos(y), 1.0, 0.3) == pytest.approx(U_NONCONVEX, abs=1e-12)


def test_projection_residual_scales_like_one_over_n(cfg):
    assert projection_residual(builtin_model("quadratic-mean", {"g_scale": 0.0}), 2, 10, 1)["max_abs"] == 0.0
    r2 = projection_residual(cfg, 2, 50, 1)["max_abs"]
    r4 = projection_residual(cfg, 4, 50, 1)["max_abs"]
    assert r2 / r4 == pytest.approx(2.0, rel=0.3)
    with pytest.raises(ValueError):
        projection_residual(cfg.with_noise(0.1), 2, 10, 1)


def test_value_is_lipschitz_in_initial_mean(cfg):
    # |U(m) - U(m')| <= |D_m G| d1(m, m') with translated Gaussians (d1 = shift)
    vals = {s: solve_mfc(cfg, gaussian(s)).value for s in (0.0, 0.2, 0.6)}
    for a in vals:
        for b in vals:
            assert abs(vals[a] - vals[b]) <= cfg.cost.terminal.lipschitz * abs(a - b) + 1e-4
