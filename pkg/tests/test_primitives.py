import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpftrl.primitives import (
    InvalidInputError, NoiseSource, as_vector, clip, gaussian_sample, norm, project_ball,
)

vectors = st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8).map(np.array)


def test_clip_below_threshold_is_identity():
    v = np.array([0.3, 0.4])
    np.testing.assert_array_equal(clip(v, 1.0), v)


def test_clip_exact_threshold_unchanged():
    v = np.array([3.0, 4.0])
    np.testing.assert_array_equal(clip(v, 5.0), v)


def test_clip_rescales_long_vector():
    np.testing.assert_allclose(clip(np.array([3.0, 4.0]), 1.0), [0.6, 0.8])


@given(vectors, st.floats(0.01, 100))
def test_clip_norm_bound_and_direction(v, L):
    c = clip(v, L)
    assert norm(c) <= L * (1 + 1e-12)
    if norm(v) > 0:
        # same direction: c is a non-negative multiple of v
        assert np.dot(c, v) >= 0
        np.testing.assert_allclose(c * norm(v), v * norm(c), atol=1e-9 * max(1, norm(v)) * L)


@given(vectors, st.floats(0.01, 100))
@settings(max_examples=50)
def test_clip_idempotent(v, L):
    np.testing.assert_allclose(clip(clip(v, L), L), clip(v, L))


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_clip_rejects_nonpositive_norm(bad):
    with pytest.raises(InvalidInputError):
        clip(np.ones(2), bad)


def test_non_finite_rejected():
    with pytest.raises(InvalidInputError):
        as_vector([1.0, np.nan])
    with pytest.raises(InvalidInputError):
        clip([np.inf, 0.0], 1.0)


def test_project_ball(rng):
    for _ in range(50):
        v = rng.normal(size=4) * 3
        p = project_ball(v, 1.5)
        assert norm(p) <= 1.5 + 1e-12
        # projection property: <v - p, u - p> <= 0 for u in the ball
        u = project_ball(rng.normal(size=4), 1.5)
        assert np.dot(v - p, u - p) <= 1e-9


def test_noise_source_is_order_independent():
    src = NoiseSource(7)
    a = [gaussian_sample(src, i, 3, 1.0) for i in (5, 1, 9)]
    b = [gaussian_sample(src, i, 3, 1.0) for i in (9, 5, 1)]
    np.testing.assert_array_equal(a[0], b[1])
    np.testing.assert_array_equal(a[2], b[0])


def test_noise_streams_and_seeds_differ():
    x = gaussian_sample(NoiseSource(1, 0), 3, 4, 1.0)
    assert not np.allclose(x, gaussian_sample(NoiseSource(1, 1), 3, 4, 1.0))
    assert not np.allclose(x, gaussian_sample(NoiseSource(2, 0), 3, 4, 1.0))


def test_zero_std_gives_zeros():
    np.testing.assert_array_equal(gaussian_sample(NoiseSource(0), 1, (2, 2), 0.0), np.zeros((2, 2)))


def test_gaussian_sample_rejects_bad_arguments():
    with pytest.raises(InvalidInputError):
        gaussian_sample(NoiseSource(0), 1, 2, -1.0)
    with pytest.raises(InvalidInputError):
        gaussian_sample(NoiseSource(0), -1, 2, 1.0)


def test_noise_moments():
    src = NoiseSource(3)
    draws = np.concatenate([gaussian_sample(src, i, 100, 2.0) for i in range(2000)])
    assert abs(draws.mean()) < 0.02
    assert abs(draws.std() - 2.0) < 0.02
