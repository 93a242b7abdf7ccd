from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfcrate.measures import EmpiricalMeasure
from mfcrate.model import (BUILTIN_MODELS, HamiltonianModel, builtin_model, check_assumptions, drift_hamiltonian,
                           legendre_transform, quadratic_hamiltonian, report_passed)


def test_quadratic_examples():
    h = quadratic_hamiltonian(1, 2.0)
    assert float(h.eval_l(np.zeros(1), np.array([2.0]))) == 1.0
    assert float(h.eval_h(np.zeros(1), np.zeros(1))) == 0.0
    np.testing.assert_array_equal(h.minimizer_p(np.zeros((3, 1))), np.zeros((3, 1)))


@pytest.mark.parametrize("a", [-1.5, 0.0, 0.7, 2.0])
def test_legendre_of_quadratic(a):
    h = quadratic_hamiltonian(1, 2.0)
    assert legendre_transform(h, [0.0], [a], p_radius=5.0) == pytest.approx(a * a / 4, abs=1e-8)


def test_legendre_of_shifted_quadratic():
    base = quadratic_hamiltonian(1, 2.0)
    h = dataclasses.replace(base, eval_h=lambda x, p: np.sum(p ** 2 + p, axis=-1))
    # sup_p(-p - p^2 - p) = 1 at p = -1
    assert legendre_transform(h, [0.0], [1.0], p_radius=5.0) == pytest.approx(1.0, abs=1e-8)


def test_legendre_box_too_small():
    h = quadratic_hamiltonian(1, 2.0)
    with pytest.raises(ValueError):
        legendre_transform(h, [0.0], [8.0], p_radius=1.0)


def test_legendre_round_trip_recovers_h():
    # L of a quadratic-drift model, seen as a Hamiltonian, dualizes back to H(x, p)
    h = drift_hamiltonian(1, 0.5, 3.0)
    as_h = dataclasses.replace(h, eval_h=h.eval_l)
    for x, p in ((0.3, 0.8), (-1.0, -0.4), (2.0, 0.0)):
        got = legendre_transform(as_h, [x], [p], p_radius=6.0)
        assert got == pytest.approx(float(h.eval_h(np.array([x]), np.array([p]))), abs=1e-7)


@pytest.mark.parametrize("name", BUILTIN_MODELS)
def test_builtins_pass_assumption_checks(name):
    report = check_assumptions(builtin_model(name), 1000, 42)
    assert report_passed(report), [r for r in report if not r["passed"]]
    assert {r["name"] for r in report} >= {"growth", "local-convexity", "legendre-duality", "derivatives"}


def test_quartic_fails_growth_with_witness():
    base = quadratic_hamiltonian(1, 2.0)
    quartic = dataclasses.replace(base, eval_h=lambda x, p: np.sum(np.asarray(p) ** 4, axis=-1),
                                  grad_p_h=lambda x, p: 4 * np.asarray(p) ** 3)
    cfg = dataclasses.replace(builtin_model("quadratic-mean"), hamiltonian=quartic)
    growth = next(r for r in check_assumptions(cfg, 1000, 1) if r["name"] == "growth")
    assert not growth["passed"]
    w = growth["witness"]
    assert w["H"] > 1.0 + w["|p|"] ** 2 + 1e-6 or w["H"] < -1.0 + w["|p|"] ** 2 - 1e-6


def test_too_few_samples():
    with pytest.raises(ValueError):
        check_assumptions(builtin_model("quadratic-mean"), 0, 1)


def test_grad_a_l_against_differences():
    h = drift_hamiltonian(2, 0.7, 3.0)
    rng = np.random.default_rng(0)
    x, a = rng.normal(size=(50, 2)), rng.normal(size=(50, 2))
    e = 1e-6
    fd = np.stack([(h.eval_l(x, a + e * np.eye(2)[j]) - h.eval_l(x, a - e * np.eye(2)[j])) / (2 * e)
                   for j in range(2)], axis=-1)
    np.testing.assert_allclose(h.grad_a_l(x, a), fd, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=10))
def test_flat_derivatives_are_normalized(pts):
    cfg = builtin_model("quadratic-drift")
    m = EmpiricalMeasure(pts)
    assert abs(m.expect(lambda z: cfg.cost.flat_dg(m, z))) <= 1e-12
    assert abs(m.expect(lambda z: cfg.cost.flat_df(m, z))) <= 1e-12
    zero = builtin_model("quadratic-mean")
    np.testing.assert_array_equal(zero.cost.flat_df(m, m.points), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_upwind_flux_is_consistent_and_monotone(x, p, q):
    for h in (quadratic_hamiltonian(1, 2.0), drift_hamiltonian(1, 0.8, 2.0)):
        X = np.array([x])
        assert float(h.upwind_h(X, np.array([p]), np.array([p]))) == pytest.approx(
            float(h.eval_h(X, np.array([p]))), abs=1e-12)
        lo, hi = min(p, q), max(p, q)
        # nondecreasing in the backward slope, nonincreasing in the forward slope
        assert h.upwind_h(X, np.array([lo]), np.array([0.0])) <= h.upwind_h(X, np.array([hi]), np.array([0.0])) + 1e-12
        assert h.upwind_h(X, np.array([0.0]), np.array([hi])) <= h.upwind_h(X, np.array([0.0]), np.array([lo])) + 1e-12
        out, scratch = np.empty(1), np.empty(1)
        h.upwind_h_into(x, np.array([p]), np.array([q]), out, scratch)
        assert out[0] == pytest.approx(float(h.upwind_h(X, np.array([p]), np.array([q]))), abs=1e-12)


@pytest.mark.parametrize("params", [{"T": 0.0}, {"a0": -1.0}, {"d": 0}, {"bogus": 1}, {"g_scale": float("nan")}])
def test_builtin_model_errors(params):
    with pytest.raises(ValueError):
        builtin_model("quadratic-mean", params)
    with pytest.raises(ValueError):
        builtin_model("no-such-model")


def test_model_requires_positive_constants():
    with pytest.raises(ValueError):
        dataclasses.replace(quadratic_hamiltonian(1, 2.0), growth_c=0.0)
    assert isinstance(quadratic_hamiltonian(1, 2.0), HamiltonianModel)
