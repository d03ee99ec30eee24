import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from wassaction.errors import HorizonExceeded, ValidationError
from wassaction.fields import (custom, field_from_dict, linear, p_power, power_grad, power_hess,
                               quadratic, softabs, zero)
from wassaction.functionals import FunctionalValue, evaluate_functional, integral
from wassaction.measure import dirac, random_measure, uniform_measure
from wassaction.optim import newton_minimize
from wassaction.problem import ProblemSpec, conjugate_exponent, horizon, t_p

FIELDS = [linear([0.3, -1.2]), quadratic(0.7), p_power(3.0, 2.0), p_power(1.5), softabs(1.5, 0.5)]


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for a in range(x.size):
        e = np.zeros_like(x)
        e[a] = h
        g[a] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("fld", FIELDS, ids=lambda f: f.kind)
def test_field_derivatives_match_differences(fld, rng):
    for _ in range(5):
        x = rng.normal(size=2)
        assert np.allclose(fld.grad(x), _fd_grad(fld.value, x), atol=1e-6)
        H_fd = np.stack([_fd_grad(lambda y: fld.grad(y)[a], x) for a in range(2)])
        assert np.allclose(fld.hess(x), H_fd, atol=1e-5)


@pytest.mark.parametrize("fld", FIELDS, ids=lambda f: f.kind)
def test_field_dict_round_trip(fld):
    back = field_from_dict(fld.to_dict())
    x = np.array([[0.4, -0.2], [1.0, 2.0]])
    assert np.allclose(back.value(x), fld.value(x))


def test_unknown_field_kind():
    with pytest.raises(ValidationError):
        field_from_dict({"kind": "bessel"})


def test_custom_field_hessian_by_differences():
    f = custom(lambda x: np.sum(np.asarray(x) ** 4, axis=-1), lambda x: 4 * np.asarray(x) ** 3)
    x = np.array([0.5, -1.0])
    assert np.allclose(f.hess(x), np.diag(12 * x**2), atol=1e-5)


def test_growth_constants():
    assert quadratic(0.5).growth_constants(2.0)[0] == 0.5
    assert p_power(3.0).growth_constants(3.0)[0] == pytest.approx(1 / 3)
    assert linear([1.0]).growth_constants(2.0)[0] == 0.0
    assert math.isinf(p_power(3.0).growth_constants(2.0)[0])


vecs = arrays(np.float64, 3, elements=st.floats(-5, 5).filter(lambda v: v == 0 or abs(v) > 1e-3))


@given(vecs, st.sampled_from([1.5, 2.0, 3.0, 4.0]))
def test_duality_maps_are_inverse(v, p):
    q = conjugate_exponent(p)
    back = power_grad(power_grad(v, p), q)
    assert np.allclose(back, v, rtol=1e-12, atol=1e-12)


def test_power_hess_p2_is_identity():
    assert np.array_equal(power_hess(np.array([0.0, 0.0]), 2.0), np.eye(2))


# -- functionals ----------------------------------------------------------------

def test_integral_examples():
    assert evaluate_functional(integral(zero()), dirac([3.0])) == 0.0
    mu = uniform_measure([[-1.0], [1.0]])
    assert evaluate_functional(integral(quadratic(1.0)), mu) == pytest.approx(1.0)


def test_wasserstein_power_example():
    F = FunctionalValue("wasserstein_power", alpha=1.0, beta=0.0, rho=dirac([0.0]), p=2.0)
    assert evaluate_functional(F, dirac([2.0])) == pytest.approx(4.0)


def test_interaction_value():
    F = FunctionalValue("interaction", kernel=quadratic(1.0))
    mu = uniform_measure([[0.0], [2.0]])
    # pairs (0,2) and (2,0) each weigh 1/4 with W = 4
    assert evaluate_functional(F, mu) == pytest.approx(2.0)


def _functional_cases(rng):
    rho = random_measure(3, 2, rng)
    return [
        integral(p_power(3.0)),
        FunctionalValue("interaction", field=quadratic(0.2), kernel=softabs(0.7, 0.3)),
        FunctionalValue("wasserstein_power", alpha=0.8, beta=0.1, rho=rho, p=2.0),
    ]


def test_functional_gradients_and_hessians(rng):
    for F in _functional_cases(rng):
        mu = random_measure(3, 2, rng)
        X, w = mu.points, mu.weights

        def f(z):
            return F.value(z.reshape(X.shape), w)

        g_fd = _fd_grad(f, X.ravel()).reshape(X.shape)
        assert np.allclose(F.grad(X, w), g_fd, atol=1e-6), F.kind
        H = F.hessian(X, w)
        if H.ndim == 3:
            full = np.zeros((3, 2, 3, 2))
            for k in range(3):
                full[k, :, k, :] = H[k]
            H = full
        H_fd = np.stack([_fd_grad(lambda z: F.grad(z.reshape(X.shape), w).ravel()[i], X.ravel())
                         for i in range(6)])
        assert np.allclose(H.reshape(6, 6), H_fd, atol=1e-4), F.kind


def test_batched_evaluation_matches_loop(rng):
    for F in _functional_cases(rng):
        w = random_measure(3, 2, rng).weights
        Xs = rng.normal(size=(4, 3, 2))
        assert np.allclose(F.value_batch(Xs, w), [F.value(x, w) for x in Xs])
        assert np.allclose(F.grad_batch(Xs, w), np.stack([F.grad(x, w) for x in Xs]))


# -- problem data ----------------------------------------------------------------

def test_horizon_examples():
    assert math.isinf(horizon(0.0, 2.0)) and math.isinf(horizon(-1.0, 3.0))
    assert horizon(1.0, 2.0) == 0.5
    assert horizon(1 / 16, 2.0) == pytest.approx(2.0)


@given(st.floats(1e-3, 1e3), st.floats(1.1, 6.0))
def test_horizon_is_the_threshold(alpha, p):
    T = horizon(alpha, p)
    Cp = p ** (-1 / p)
    assert p * (2 * Cp * T) ** p * alpha == pytest.approx(1.0, rel=1e-9)
    assert p * (2 * Cp * 0.999 * T) ** p * alpha < 1.0


def test_t_p_values():
    assert t_p(2.0) == pytest.approx(math.pi / 2)
    q = 1.5
    assert t_p(3.0) == pytest.approx((math.pi / q) / (2 ** (1 / q) * math.sin(math.pi / q)))


def test_spec_defaults_and_checks():
    spec = ProblemSpec(p=2.0, g=linear([0.5]), V=quadratic(0.5))
    assert spec.L == 0.5 and spec.alpha == 0.5
    assert spec.closed_form_kind() is None  # g is not zero
    with pytest.raises(ValidationError):
        ProblemSpec(p=2.0, g=linear([0.5]), L=1.0)
    with pytest.raises(ValidationError):
        ProblemSpec(p=2.0, V=quadratic(0.5), alpha=0.1)
    with pytest.raises(ValidationError):
        ProblemSpec(p=1.0)
    with pytest.raises(ValidationError):
        ProblemSpec(p=2.0, functional="wasserstein_power")


def test_spec_horizons():
    assert ProblemSpec(p=2.0, V=quadratic(0.5)).time_horizon() == pytest.approx(math.pi / 2)
    assert ProblemSpec(p=2.0, g=linear([1.0]), V=quadratic(0.5)).time_horizon() == pytest.approx(horizon(0.5, 2))
    assert math.isinf(ProblemSpec(p=3.0).time_horizon())


def test_spec_round_trip():
    spec = ProblemSpec(p=3.0, g=softabs(0.5, 1.0), V=p_power(3.0, 0.5))
    back = ProblemSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()


# -- optimizer -------------------------------------------------------------------

def test_newton_on_rosenbrock():
    def f(z):
        return (1 - z[0]) ** 2 + 100 * (z[1] - z[0] ** 2) ** 2

    def g(z):
        return np.array([-2 * (1 - z[0]) - 400 * z[0] * (z[1] - z[0] ** 2), 200 * (z[1] - z[0] ** 2)])

    def h(z):
        return np.array([[2 - 400 * (z[1] - 3 * z[0] ** 2), -400 * z[0]], [-400 * z[0], 200.0]])

    res = newton_minimize(f, g, h, np.array([-1.2, 1.0]), gtol=1e-10)
    assert res.converged and np.allclose(res.x, [1, 1], atol=1e-8)


def test_newton_handles_indefinite_start():
    res = newton_minimize(lambda z: z[0] ** 4 - z[0] ** 2, lambda z: np.array([4 * z[0] ** 3 - 2 * z[0]]),
                          lambda z: np.array([[12 * z[0] ** 2 - 2]]), np.array([0.1]), gtol=1e-12)
    assert res.converged and abs(res.x[0]) == pytest.approx(1 / math.sqrt(2))


def test_horizon_exceeded_is_validation_error():
    assert issubclass(HorizonExceeded, ValidationError)
