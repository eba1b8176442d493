import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from camp.denoise import Denoiser, divergence_mean, soft_threshold, soft_threshold_derivative

finite = st.floats(-1e6, 1e6)
thresholds = st.floats(0.0, 1e3)


@pytest.mark.parametrize("x,theta,expected", [(2, 1, 1), (-2, 1, -1), (0.5, 1, 0), (3.7, 3.7, 0), (0, 0, 0)])
def test_soft_threshold_values(x, theta, expected):
    assert soft_threshold(x, theta) == expected


@pytest.mark.parametrize("x,theta,expected", [(2, 1, 1), (0.5, 1, 0), (1, 1, 0), (-1, 1, 0), (-3, 1, 1)])
def test_derivative_values(x, theta, expected):
    assert soft_threshold_derivative(x, theta) == expected


def test_derivative_matches_finite_differences():
    rng = np.random.default_rng(0)
    theta = 0.7
    x = rng.uniform(-3, 3, 10_000)
    keep = np.abs(np.abs(x) - theta) > 1e-5
    h = 1e-6
    fd = (soft_threshold(x + h, theta) - soft_threshold(x - h, theta)) / (2 * h)
    np.testing.assert_allclose(soft_threshold_derivative(x, theta)[keep], fd[keep], atol=1e-6)


@given(finite, finite, thresholds)
def test_one_lipschitz(a, b, theta):
    assert abs(soft_threshold(a, theta) - soft_threshold(b, theta)) <= abs(a - b) * (1 + 1e-12)


@given(finite, thresholds)
def test_odd_symmetry(x, theta):
    assert soft_threshold(-x, theta) == -soft_threshold(x, theta)


@given(arrays(float, st.integers(1, 50), elements=finite), thresholds)
def test_divergence_mean_in_unit_interval(v, theta):
    d = divergence_mean(v, theta)
    assert 0.0 <= d <= 1.0
    assert d == pytest.approx(np.mean(soft_threshold_derivative(v, theta)))


def test_divergence_mean_examples():
    assert divergence_mean(np.array([5.0, -5.0, 2.0]), 1.0) == 1.0
    assert divergence_mean(np.zeros(10), 0.5) == 0.0
    assert divergence_mean(np.array([2, 0.5, -2, 0]), 1.0) == 0.5


def test_denoiser_constant_and_scheduled_thresholds():
    x = np.array([-3.0, 0.2, 1.5])
    assert Denoiser(1.0).threshold(7) == 1.0
    sched = Denoiser([2.0, 1.0])
    np.testing.assert_array_equal(sched(x, 1), soft_threshold(x, 1.0))
    np.testing.assert_array_equal(sched(x, 0), soft_threshold(x, 2.0))


def test_batched_denoiser_rows_match_scalar_runs():
    x = np.random.default_rng(1).standard_normal((3, 20))
    den = Denoiser(np.array([0.1, 0.5, 2.0]), batch=True)
    assert den.batch_shape == (3,)
    out = den(x, 0)
    div = den.divergence(x, 0)
    for i, th in enumerate([0.1, 0.5, 2.0]):
        np.testing.assert_array_equal(out[i], soft_threshold(x[i], th))
        assert div[i] == divergence_mean(x[i], th)


def test_denoiser_rejects_negative_threshold():
    with pytest.raises(ValueError):
        Denoiser(-0.1)
