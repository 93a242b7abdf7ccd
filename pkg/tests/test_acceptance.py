"""Acceptance criteria. Each test records one PASS/FAIL line (shown in the
terminal summary) and then asserts the same condition."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import record
from mfcrate.concentration import ConcentrationConfig, common_noise_shift_check, fournier_guillin, rate_in_particles
from mfcrate.lipnet import (PiecewiseLinearLip, build_net_1d, calibrate_hoeffding_constant, dual_lower_bound,
                            tail_experiment)
from mfcrate.measures import (DiscreteDensity, EmpiricalMeasure, GaussianMixture, Grid1D, w1_assignment,
                              w1_exact_1d)
from mfcrate.meanfield import SOLVER_TOL, dpp_check, group_split_value, reduced_oracle, solve_mfc, solve_mfc_best
from mfcrate.nparticle import (NParticleProblem, central_gradient, lipschitz_check, policy_evaluate_mc,
                               semiconcavity_check, solve_hjb)
from mfcrate.partition import build_partition, covering_constant, residual_check
from mfcrate.rates import fit_with_ci, loglog_fit

pytestmark = pytest.mark.slow

# Cole-Hopf values of the benchmark at the origin, viscosity 1/N (tests/oracles.py, frozen)
COLE_HOPF = {1: -0.21535971213687743, 2: -0.26993718604411276, 3: -0.2960121135759638,
             4: -0.31114935125604115}
# Hopf-Lax value of the zero-viscosity problem at mean 0
MEAN_FIELD_VALUE_AT_0 = -0.3659810893165679


def _benchmark_density():
    grid = Grid1D(-6.0, 6.0, 241)
    return DiscreteDensity.gaussian(grid, 0.25, 0.25)


def test_criterion_01_oracle_equivalence(quad_mean, benchmark_solves):
    start = time.perf_counter()
    errors = {}
    for N in (2, 3):
        v = benchmark_solves(N)
        errors[N] = abs(v.value_at(0, np.zeros(N)) - reduced_oracle(quad_mean, 1.0 / N, 0.0))
    study = {}
    for n in (101, 201, 401):
        v = benchmark_solves(2, n)
        study[n] = abs(v.value_at(0, np.zeros(2)) - reduced_oracle(quad_mean, 0.5, 0.0))
    orders = [math.log2(study[101] / study[201]), math.log2(study[201] / study[401])]
    elapsed = time.perf_counter() - start
    ok = max(errors.values()) <= 1e-2 and min(orders) >= 0.9 and elapsed < 120
    record("criterion 1 oracle equivalence", ok,
           f"errors N=2 {errors[2]:.2e}, N=3 {errors[3]:.2e}; refinement orders {orders[0]:.2f}, {orders[1]:.2f}; "
           f"{elapsed:.0f}s")
    assert ok


def test_criterion_02_main_rate(quad_mean, benchmark_solves):
    start = time.perf_counter()
    # direct tier: finest grid per N, with the change from a coarser grid as the error bar
    grids = {1: (801, 401), 2: (401, 201), 3: (201, 101), 4: (41, 31)}
    gaps, errs = [], []
    for N, (fine, coarse) in grids.items():
        vf = benchmark_solves(N, fine).value_at(0, np.zeros(N))
        vc = benchmark_solves(N, coarse).value_at(0, np.zeros(N))
        gaps.append(abs(vf - MEAN_FIELD_VALUE_AT_0))
        errs.append(abs(vf - vc))
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    fit_a = fit_with_ci(list(zip(grids, gaps, errs)), resamples=2000, seed=2)
    ok_a = decreasing and fit_a.ci_hi < 0
    # oracle tier
    u = reduced_oracle(quad_mean, 0.0, 0.0)
    ns = [2, 4, 8, 16, 32, 64]
    fit_b = loglog_fit([(N, abs(reduced_oracle(quad_mean, 1.0 / N, 0.0) - u)) for N in ns])
    ok_b = -1.2 <= fit_b.slope <= -0.8
    elapsed = time.perf_counter() - start
    ok = ok_a and ok_b and elapsed < 300
    record("criterion 2 main rate", ok,
           f"direct gaps {[round(g, 4) for g in gaps]}, slope {fit_a.slope:.3f} CI [{fit_a.ci_lo:.3f}, "
           f"{fit_a.ci_hi:.3f}]; oracle slope {fit_b.slope:.3f}; {elapsed:.0f}s")
    assert ok


def test_criterion_03_concentration_exponent():
    start = time.perf_counter()
    res = rate_in_particles([100, 1000, 10_000, 100_000], h=0.5, trials=200, seed=3)
    fit = res.fit
    elapsed = time.perf_counter() - start
    ok = fit.ci_hi <= -1 / 6 and -0.6 <= fit.ci_lo and fit.ci_hi <= -0.4 and elapsed < 600
    record("criterion 3 concentration exponent", ok,
           f"slope {fit.slope:.3f} CI [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}]; {elapsed:.0f}s")
    assert ok


def test_criterion_04_sampling_rate():
    start = time.perf_counter()
    res = fournier_guillin(GaussianMixture([0.0], 1.0, [0.0]), [100, 1000, 10_000, 100_000], trials=200, seed=4)
    fit = res.fit
    elapsed = time.perf_counter() - start
    ok = -0.6 <= fit.ci_lo and fit.ci_hi <= -0.4 and elapsed < 300
    record("criterion 4 sampling rate", ok, f"slope {fit.slope:.3f} CI [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}]; "
                                            f"{elapsed:.0f}s")
    assert ok


def test_criterion_05_uniform_lipschitz(benchmark_solves):
    vals = [lipschitz_check(benchmark_solves(N))["value"] for N in (1, 2, 3)]
    spread = (max(vals) - min(vals)) / min(vals)
    ok = spread < 0.25
    record("criterion 5 uniform Lipschitz", ok, f"N*max|D_k V| = {[round(v, 4) for v in vals]}, spread {spread:.2%}")
    assert ok


def test_criterion_06_uniform_semiconcavity(benchmark_solves):
    vals = [semiconcavity_check(benchmark_solves(N), 1000, seed=6)["value"] for N in (1, 2, 3)]
    factor = max(vals) / min(vals)
    ok = min(vals) > 0 and factor <= 2
    record("criterion 6 uniform semiconcavity", ok, f"max ratios {[round(v, 3) for v in vals]}, factor {factor:.2f}")
    assert ok


def test_criterion_07_easy_inequality(quad_mean, benchmark_solves):
    grid = Grid1D(-6.0, 6.0, 241)
    rng = np.random.default_rng(7)
    worst = -np.inf
    count = 0
    for N in (2, 3):
        v = benchmark_solves(N)
        prob = v.problem
        for i in range(10):
            x = rng.uniform(-1.5, 1.5, N)
            sol = solve_mfc(quad_mean, DiscreteDensity.gaussian(grid, float(x.mean()), 0.25))
            ctrl = sol.control

            def feedback(t, states, ctrl=ctrl):
                n = min(int(t / ctrl.dt + 1e-9), ctrl.n_steps - 1)
                return np.interp(states, grid.nodes, ctrl.values[n])

            mc = policy_evaluate_mc(prob, None, x, 2000, seed=100 * N + i, feedback=feedback)
            margin = v.value_at(0, x) - (mc.mean + 3 * mc.stderr)
            worst = max(worst, margin)
            count += margin <= 0
    ok = count == 20
    record("criterion 7 easy inequality", ok, f"{count}/20 states satisfy V <= cost + 3 se; worst margin {worst:.4f}")
    assert ok


def test_criterion_08_dpp_and_group_split(quad_mean):
    m0 = _benchmark_density()
    dpp = dpp_check(quad_mean, m0, quad_mean.horizon_T / 2)
    x = m0.grid.nodes
    left = DiscreteDensity(m0.grid, np.where(x < 0.25, m0.weights, 0.0), unit_mass=False)
    right = DiscreteDensity(m0.grid, m0.weights - left.weights, unit_mass=False)
    split = group_split_value(quad_mean, [left, right])
    whole = solve_mfc_best(quad_mean, m0).value
    ok = dpp["residual"] <= 5 * SOLVER_TOL and abs(split - whole) <= 1e-3
    record("criterion 8 DPP and group split", ok,
           f"DPP residual {dpp['residual']:.2e} (limit {5 * SOLVER_TOL:.0e}); |U^2 - U| = {abs(split - whole):.2e}")
    assert ok


def test_criterion_09_subgaussian_tail():
    phi = PiecewiseLinearLip([-10.0, 10.0], [-10.0, 10.0])
    calib = tail_experiment(phi, 100, 1.0, 0.0, 100_000, seed=9)
    c_hat = calibrate_hoeffding_constant(calib)
    test = tail_experiment(phi, 1000, 1.0, 0.0, 100_000, seed=10)
    obs = test.observed()
    excess = float(np.max(test.empirical_log_tail[obs] - test.hoeffding_log_bound(c_hat)[obs]))
    ok = excess <= 0
    record("criterion 9 sub-Gaussian tail", ok,
           f"C_hat {c_hat:.3f} from N=100; max log-tail excess at N=1000 {excess:.3f} over {int(obs.sum())} points")
    assert ok


def test_criterion_10_common_noise(quad_mean):
    cfg = ConcentrationConfig(1, 50, [0.3], 0.5, 200, seed=10)
    shift = common_noise_shift_check(cfg, 0.5, 200, seed=10)
    noisy = quad_mean.with_noise(0.5)
    prob = NParticleProblem.auto(noisy, 2, 201)
    v = solve_hjb(prob)
    x0 = np.array([0.2, -0.4])
    mc = policy_evaluate_mc(prob, v, x0, 4000, seed=10)
    z = abs(v.value_at(0, x0) - mc.mean) / mc.stderr
    ok = shift.max_difference <= 1e-12 and z <= 3
    record("criterion 10 common noise", ok,
           f"max paired shift difference {shift.max_difference:.1e}; solve vs Monte Carlo {z:.2f} standard errors")
    assert ok


def test_criterion_11_transport_exactness():
    rng = np.random.default_rng(11)
    worst_exact = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 60))
        a, b = rng.normal(size=(n, 1)), rng.normal(size=(n, 1)) * 2 + 0.5
        worst_exact = max(worst_exact, abs(w1_exact_1d(EmpiricalMeasure(a), EmpiricalMeasure(b))
                                           - w1_assignment(EmpiricalMeasure(a), EmpiricalMeasure(b))))
    net = build_net_1d(0.25, 2.0)
    upper_violation, lower_violation = -np.inf, -np.inf
    for _ in range(100):
        mu = EmpiricalMeasure(rng.uniform(-2, 2, (int(rng.integers(1, 40)), 1)))
        nu = EmpiricalMeasure(rng.uniform(-2, 2, (int(rng.integers(1, 40)), 1)))
        exact = w1_exact_1d(mu, nu)
        dual = dual_lower_bound(mu, nu, net)
        upper_violation = max(upper_violation, dual - exact)
        lower_violation = max(lower_violation, exact - net.epsilon - dual)
    for _ in range(20):
        mu = GaussianMixture(rng.normal(size=(5, 1)), float(rng.uniform(0.01, 1)), [0.0])
        nu = EmpiricalMeasure(rng.normal(size=(30, 1)) * 2)
        upper_violation = max(upper_violation, dual_lower_bound(mu, nu, net) - w1_exact_1d(mu, nu))
    ok = worst_exact <= 1e-10 and upper_violation <= 1e-12 and lower_violation <= 0
    record("criterion 11 transport exactness", ok,
           f"max |exact - assignment| {worst_exact:.1e}; max dual - W1 {upper_violation:.1e}; "
           f"max W1 - eps - dual {lower_violation:.3f}")
    assert ok


def test_criterion_12_partition(quad_mean, benchmark_solves):
    v = benchmark_solves(3)
    ham = quad_mean.hamiltonian
    R = ham.control_radius_R
    grads = central_gradient(v.values[0], v.grid.spacing)
    rng = np.random.default_rng(12)
    M = v.grid.n_points
    idx = rng.integers(M // 4, 3 * M // 4, size=(200, 3))
    states, momenta = [], []
    for node in idx:
        states.append(v.grid.nodes[node])
        momenta.append([3 * grads[k][tuple(node)] for k in range(3)])
    states = np.concatenate(states)[:, None]
    momenta = np.concatenate(momenta)[:, None]
    feedback = np.clip(ham.feedback(states, momenta), -R, R)
    ratios, counts_ok = {}, True
    for delta in (0.2, 0.1, 0.05):
        part = build_partition(feedback, R, delta)
        ratios[delta] = residual_check(part, states, momenta, ham)["max_over_delta"]
        counts_ok &= part.J <= covering_constant(R, 1) / delta
    factor = max(ratios.values()) / min(ratios.values())
    ok = factor <= 2 and counts_ok
    record("criterion 12 partition", ok,
           f"max residual / delta {[f'{r:.4f}' for r in ratios.values()]}, factor {factor:.2f}; "
           f"J within covering bound: {counts_ok}")
    assert ok
