import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wassaction.classical import flow_map, minimize_classical
from wassaction.ensemble import EnsemblePath, closed_form_flow, minimize_generalized
from wassaction.errors import NoConvergence, ValidationError
from wassaction.eulerpoisson import (Characteristic, TestFunction, boundary_momentum_check,
                                     closed_form_evaluator, default_test_functions, euler_lagrange_shoot,
                                     euler_poisson_residual, fd_gradient, momentum_to_velocity,
                                     optimality_condition_check, solve_characteristic_bvp,
                                     velocity_to_momentum)
from wassaction.fields import custom, linear, p_power, quadratic, softabs
from wassaction.measure import random_measure, uniform_measure
from wassaction.problem import ProblemSpec

HARMONIC = ProblemSpec(p=2.0, V=quadratic(0.5))
CUBIC = ProblemSpec(p=3.0, V=p_power(3.0))

vectors = st.lists(st.floats(-5, 5), min_size=1, max_size=3).map(np.array)


@settings(max_examples=50)
@given(vectors, st.sampled_from([1.5, 2.0, 3.0, 4.0]))
def test_duality_maps_are_inverse(v, p):
    assert np.allclose(momentum_to_velocity(velocity_to_momentum(v, p), p), v, atol=1e-9)


def test_duality_map_values():
    assert np.allclose(velocity_to_momentum([3.0, 4.0], 3.0), [15.0, 20.0])
    assert np.all(velocity_to_momentum([0.0, 0.0], 1.5) == 0.0)


# -- characteristics ---------------------------------------------------------

def test_shoot_harmonic_oscillator():
    ch = euler_lagrange_shoot([1.0], [0.0], 1.2, HARMONIC, steps=1000)
    s = ch.path.times
    assert np.max(np.abs(ch.path.positions[:, 0] - np.cos(s))) < 1e-10
    assert np.max(np.abs(ch.momenta[:, 0] + np.sin(s))) < 1e-10


def test_shoot_free_particle_is_straight(rng):
    spec = ProblemSpec(p=3.0)
    v0 = rng.normal(size=2)
    ch = euler_lagrange_shoot([0.5, -1.0], v0, 2.0, spec, steps=10)
    assert np.allclose(ch.path.positions[-1], [0.5, -1.0] + 2.0 * v0, atol=1e-12)
    assert np.allclose(ch.velocities(3.0), v0)


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_shoot_conserves_energy_through_reversals(p):
    # starting at rest the momentum reverses sign on each swing
    spec = ProblemSpec(p=p, V=p_power(3.0))
    ch = euler_lagrange_shoot([1.0], [0.0], 4.0, spec, steps=2000)
    q = p / (p - 1)
    energy = np.abs(ch.momenta[:, 0]) ** q / q + np.abs(ch.path.positions[:, 0]) ** 3 / 3
    assert np.max(np.abs(energy - energy[0])) < 1e-4
    assert np.any(np.diff(np.sign(ch.momenta[1:, 0])) != 0)


def test_shoot_validation():
    with pytest.raises(ValidationError):
        euler_lagrange_shoot([0.0], [0.0, 1.0], 1.0, HARMONIC)
    with pytest.raises(ValidationError):
        euler_lagrange_shoot([0.0], [0.0], 1.0, HARMONIC, steps=0)


def test_characteristic_round_trip():
    ch = euler_lagrange_shoot([1.0, 0.0], [0.0, 1.0], 0.5, HARMONIC, steps=5)
    back = Characteristic.from_dict(json.loads(ch.to_json()))
    assert np.array_equal(back.momenta, ch.momenta)
    assert np.array_equal(back.path.positions, ch.path.positions)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_bvp_matches_flow_map(x):
    ch = solve_characteristic_bvp([x], 0.8, HARMONIC)
    assert ch.path.positions[0, 0] == pytest.approx(x / math.cos(0.8), abs=1e-10)
    assert np.allclose(ch.path.positions[:, 0], [flow_map([x], 0.8, s, HARMONIC)[0] for s in ch.path.times],
                       atol=1e-9)


def test_bvp_agrees_with_direct_transcription():
    spec = ProblemSpec(p=2.0, g=softabs(0.8, 0.5), V=quadratic(0.2))
    ch = solve_characteristic_bvp([0.7], 0.6, spec)
    rep = minimize_classical([0.7], 0.6, spec, N=400)
    assert rep.path.positions[0, 0] == pytest.approx(ch.path.positions[0, 0], abs=1e-4)


def test_bvp_rejects_horizon():
    with pytest.raises(ValidationError):
        solve_characteristic_bvp([1.0], 2.0, HARMONIC)


def test_bvp_reports_miss():
    # y + t (y^2 + 1) = 0 has no real root for t = 0.9
    g = custom(lambda x: np.sum(x**3 / 3 + x, axis=-1), lambda x: x**2 + 1, growth=3.0, coef=1.0)
    with pytest.raises(NoConvergence):
        solve_characteristic_bvp([0.0], 0.9, ProblemSpec(p=2.0, g=g), steps=50)


# -- test functions ----------------------------------------------------------

@settings(max_examples=30)
@given(st.tuples(st.integers(0, 3), st.integers(0, 3)), st.integers(0, 10_000))
def test_test_function_gradient(exps, seed):
    rng = np.random.default_rng(seed)
    phi = TestFunction(exps, np.zeros(2), np.array([1.5, 2.0]))
    x = rng.uniform(-1.2, 1.2, size=2)
    h = 1e-6
    fd = [(phi.value(x + h * e) - phi.value(x - h * e)) / (2 * h) for e in np.eye(2)]
    assert np.allclose(phi.grad(x), fd, atol=1e-6)


def test_test_function_support():
    phi = TestFunction((1,), np.zeros(1), np.ones(1))
    assert phi.value(np.array([[1.0], [2.0]])).tolist() == [0.0, 0.0]
    assert phi.value(np.array([[0.5]]))[0] > 0


def test_default_test_functions_count(rng):
    sigma = closed_form_flow(random_measure(4, 2, rng), 0.5, 10, HARMONIC)
    assert len(default_test_functions(sigma)) == 10
    assert len(default_test_functions(sigma, vector=True)) == 20


# -- Euler-Poisson residuals -------------------------------------------------

def test_residual_converges_on_flow(rng):
    mu = random_measure(10, 1, rng)
    res = [euler_poisson_residual(closed_form_flow(mu, 0.6, N, HARMONIC), HARMONIC) for N in (100, 200, 400)]
    for k in range(2):
        assert res[k + 1].continuity <= 0.6 * res[k].continuity
        assert res[k + 1].momentum <= 0.6 * res[k].momentum
    assert max(res[-1]) <= 1e-2


def test_residual_detects_wrong_path(rng):
    mu = random_measure(6, 1, rng)
    sigma = closed_form_flow(mu, 0.6, 200, HARMONIC)
    s = sigma.times[:, None, None]
    bent = EnsemblePath(mu.weights, sigma.positions + 0.3 * np.sin(math.pi * s / 0.6), 0.6)
    assert euler_poisson_residual(bent, HARMONIC).momentum > 100 * euler_poisson_residual(sigma, HARMONIC).momentum


def test_residual_report_shape(rng):
    sigma = closed_form_flow(random_measure(3, 2, rng), 0.4, 50, HARMONIC)
    rep = euler_poisson_residual(sigma, HARMONIC)
    cont, mom = rep
    assert cont == max(rep.continuity_by_test.values())
    assert set(rep.to_dict()) == {"continuity", "momentum", "continuity_by_test", "momentum_by_test"}
    with pytest.raises(ValidationError):
        euler_poisson_residual(EnsemblePath.stationary(random_measure(2, 1, rng), 1.0, 3), HARMONIC)


def test_residual_on_solver_output(rng):
    mu = random_measure(5, 1, rng)
    spec = ProblemSpec(p=3.0, g=softabs(0.5), V=quadratic(0.3))
    sigma = minimize_generalized(mu, 0.5, spec, 200).path
    assert max(euler_poisson_residual(sigma, spec)) < 1e-2


# -- optimality --------------------------------------------------------------

def test_fd_gradient():
    u = lambda x, s: s * float(np.sum(x**2))
    assert np.allclose(fd_gradient(u, np.array([1.0, -2.0]), 0.5), [1.0, -2.0])


def test_optimality_harmonic(rng):
    mu = random_measure(10, 1, rng)
    sigma = closed_form_flow(mu, 0.6, 400, HARMONIC)
    assert optimality_condition_check(sigma, HARMONIC, closed_form_evaluator(HARMONIC)) <= 1e-6


def test_optimality_cubic():
    mu = uniform_measure([[0.0], [1.0]])
    sigma = minimize_generalized(mu, 0.4, CUBIC, 400).path
    assert optimality_condition_check(sigma, CUBIC, closed_form_evaluator(CUBIC)) <= 5e-3


def test_boundary_momentum_straight_lines(rng):
    c = np.array([0.6, -0.3])
    spec = ProblemSpec(p=2.0, g=linear(c))
    sigma = minimize_generalized(random_measure(4, 2, rng), 0.7, spec, 100).path
    assert boundary_momentum_check(sigma, spec) <= 1e-5


def test_boundary_momentum_detects_wrong_start(rng):
    spec = ProblemSpec(p=2.0, g=linear([1.0]))
    sigma = EnsemblePath.stationary(random_measure(3, 1, rng), 0.5, 10)
    assert boundary_momentum_check(sigma, spec) == pytest.approx(1.0)
