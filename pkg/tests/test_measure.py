import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from wassaction import DiscreteMeasure, new_measure, pth_moment, pushforward
from wassaction.classical import flow_map
from wassaction.errors import DimensionMismatch, EmptyMeasure, ValidationError
from wassaction.fields import quadratic
from wassaction.measure import dirac, random_measure, uniform_measure
from wassaction.problem import ProblemSpec


def test_renormalizes_single_weight():
    mu = new_measure([[0.0]], [2.0])
    assert mu.weights.tolist() == [1.0]


def test_equal_weights_split_evenly():
    mu = new_measure([[0.0], [1.0]], [1, 1])
    assert mu.weights.tolist() == [0.5, 0.5]


def test_zero_weight_dropped():
    mu = new_measure([[0.0], [1.0]], [1, 0])
    assert mu.n == 1 and mu.points.tolist() == [[0.0]]


def test_all_zero_weights_rejected():
    with pytest.raises(EmptyMeasure):
        new_measure([[0.0], [1.0]], [0, 0])


def test_ragged_points_rejected():
    with pytest.raises(DimensionMismatch):
        new_measure([[0.0], [1.0, 2.0]], [1, 1])


def test_constructor_rejects_unnormalized():
    with pytest.raises(ValidationError):
        DiscreteMeasure(np.zeros((2, 1)), np.array([0.5, 0.6]))


def test_strict_loading_rejects_off_sum():
    with pytest.raises(ValidationError):
        DiscreteMeasure.from_dict({"points": [[0.0]], "weights": [1.1]})


def test_negative_weight_rejected():
    with pytest.raises(ValidationError):
        new_measure([[0.0], [1.0]], [1.0, -0.5])


def test_moments():
    assert pth_moment(dirac([0.0]), 2) == 0.0
    assert pth_moment(uniform_measure([[1.0], [-1.0]]), 2) == pytest.approx(1.0)
    mu = new_measure([[2.0], [-1.0]], [0.3, 0.7])
    assert pth_moment(mu, 3) == pytest.approx(3.1, abs=1e-14)


def test_pushforward_identity_and_doubling():
    mu = random_measure(5, 2, np.random.default_rng(1))
    assert pushforward(mu, lambda x: x).same_as(mu, tol=0.0)
    assert pushforward(dirac([1.0]), lambda x: 2 * x).points.tolist() == [[2.0]]


def test_pushforward_keeps_coincident_particles():
    mu = uniform_measure([[-1.0], [1.0]])
    nu = pushforward(mu, np.abs)
    assert nu.n == 2 and nu.merged().n == 1


def test_flow_map_at_final_time_is_identity():
    spec = ProblemSpec(p=2.0, V=quadratic(0.5))
    mu = random_measure(6, 1, np.random.default_rng(2))
    nu = pushforward(mu, lambda x: flow_map(x, 0.7, 0.7, spec))
    assert nu.same_as(mu, tol=1e-15)


def test_json_round_trip():
    mu = random_measure(4, 3, np.random.default_rng(3))
    back = DiscreteMeasure.from_json(mu.to_json())
    assert back.same_as(mu, tol=0.0)
    assert set(json.loads(mu.to_json())) == {"points", "weights"}


def test_arrays_are_read_only():
    mu = random_measure(3, 1, np.random.default_rng(4))
    with pytest.raises(ValueError):
        mu.points[0, 0] = 5.0


# keep magnitudes away from the subnormal range so |x|^p does not underflow
coords = st.one_of(st.just(0.0), st.floats(1e-6, 10), st.floats(-10, -1e-6))
points_2d = arrays(np.float64, st.tuples(st.integers(1, 6), st.just(2)), elements=coords)


@given(points_2d, st.floats(-3, 3), st.sampled_from([1.5, 2.0, 3.0]))
def test_moment_scales_under_dilation(pts, c, p):
    mu = uniform_measure(pts)
    scaled = pushforward(mu, lambda x: c * x)
    base = pth_moment(mu, p)
    assert pth_moment(scaled, p) == pytest.approx(abs(c) ** p * base, rel=1e-10, abs=1e-300)


@given(points_2d)
def test_pushforward_preserves_mass(pts):
    mu = uniform_measure(pts)
    nu = pushforward(mu, lambda x: x**2 - 1)
    assert nu.weights.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.array_equal(nu.weights, mu.weights)


@given(points_2d, st.sampled_from([1.5, 2.0, 4.0]))
def test_moment_zero_iff_all_at_origin(pts, p):
    mu = uniform_measure(pts)
    m = pth_moment(mu, p)
    assert m >= 0
    assert (m == 0) == bool(np.all(pts == 0))
