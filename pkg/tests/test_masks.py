import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from prommask.exceptions import ConfigurationError, DataValidationError
from prommask.masks import (
    BinaryMask,
    GumbelNoise,
    MaskDistribution,
    MaskKind,
    broadcast_lines,
    deterministic_mask,
    expected_density,
    gumbel_from_uniform,
    init_distribution,
    log_odds,
    model_average,
    sample_gumbel,
    sample_soft,
    straight_through,
)


def test_distribution_validation():
    with pytest.raises(DataValidationError):
        MaskDistribution((2, 2), "2d", [0.5, 0.5, 0.5])
    with pytest.raises(DataValidationError):
        MaskDistribution((2, 2), "2d", [0.5, 0.5, 0.5, 1.2])
    with pytest.raises(DataValidationError):
        MaskDistribution((2, 2), "1d", [0.5, np.nan])
    dist = MaskDistribution((2, 3), "1d", [0.1, 0.2, 0.3])
    assert len(dist) == 3
    np.testing.assert_array_equal(dist.grid(), [[0.1, 0.2, 0.3]] * 2)
    with pytest.raises(ValueError):
        dist.theta[0] = 1.0


def test_mask_kind_parse():
    assert MaskKind.parse("2d") is MaskKind.FULL_2D
    assert MaskKind.parse("1d") is MaskKind.LINES_1D
    assert MaskKind.parse(MaskKind.LINES_1D) is MaskKind.LINES_1D
    with pytest.raises(ConfigurationError):
        MaskKind.parse("3d")


def test_init_distribution():
    a = init_distribution((64, 64), seed=7)
    b = init_distribution((64, 64), seed=7)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert a.theta.min() >= 0.45 and a.theta.max() <= 0.55
    assert abs(expected_density(a) - 0.5) <= 0.02
    assert len(init_distribution((8, 5), "1d", seed=0)) == 5


def test_log_odds_values():
    np.testing.assert_allclose(log_odds(np.array([0.5, 0.9, 1.0])), [0.0, np.log(9), 13.8155], atol=1e-4)
    assert np.isfinite(log_odds(np.array([0.0])))[0]


def test_gumbel_values():
    assert gumbel_from_uniform(np.exp(-1.0)) == pytest.approx(0.0, abs=1e-15)
    assert gumbel_from_uniform(0.5) == pytest.approx(-np.log(np.log(2)), abs=1e-12)
    assert gumbel_from_uniform(0.5) == pytest.approx(0.36651, abs=1e-5)


def test_gumbel_mean_is_euler_mascheroni():
    noise = sample_gumbel(10**6, seed=0)
    assert abs(noise.g1.mean() - np.euler_gamma) < 0.01
    assert abs(noise.g0.mean() - np.euler_gamma) < 0.01


def test_sample_soft_values():
    zero = GumbelNoise(np.zeros(1), np.zeros(1))
    for tau in (0.1, 1.0, 5.0):
        assert sample_soft(np.zeros(1), zero, tau).values[0] == 0.5
    noise = GumbelNoise(np.array([0.25]), np.array([0.75]))
    assert sample_soft(np.array([1.0]), noise, 0.5).values[0] == pytest.approx(expit(1.0), abs=1e-12)
    assert sample_soft(np.array([1.0]), noise, 0.5).values[0] == pytest.approx(0.73106, abs=1e-5)
    hot = GumbelNoise(np.array([2.0]), np.array([0.0]))
    assert sample_soft(np.zeros(1), hot, 0.01).values[0] == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ConfigurationError):
        sample_soft(np.zeros(1), zero, 0.0)


def test_hard_samples_follow_theta():
    # thresholding sigmoid((rho + g1 - g0) / tau) at 1/2 is an exact Bernoulli(theta) draw
    theta = np.array([0.05, 0.3, 0.5, 0.8, 0.97])
    noise = sample_gumbel((200_000, theta.size), seed=1)
    hard = straight_through(sample_soft(log_odds(theta), noise, 0.7)).values
    se = np.sqrt(theta * (1 - theta) / 200_000)
    assert np.all(np.abs(hard.mean(axis=0) - theta) < 5 * se)


def test_straight_through_threshold():
    out = straight_through(np.array([0.7, 0.5, 0.49]))
    np.testing.assert_array_equal(out.values, [1, 1, 0])
    np.testing.assert_array_equal(out.soft, [0.7, 0.5, 0.49])


def test_deterministic_mask():
    dist = MaskDistribution((1, 3), "2d", [0.9, 0.1, 0.5])
    np.testing.assert_array_equal(deterministic_mask(dist, 2).values, [1, 0, 1])
    flat = MaskDistribution((2, 3), "2d", np.full(6, 0.3))
    np.testing.assert_array_equal(deterministic_mask(flat, 1).values, [1, 0, 0, 0, 0, 0])
    np.testing.assert_array_equal(deterministic_mask(flat, 6).values, 1)
    for bad in (-1, 7):
        with pytest.raises(ConfigurationError):
            deterministic_mask(flat, bad)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.data())
def test_deterministic_mask_is_top_k(theta, data):
    k = data.draw(st.integers(0, len(theta)))
    mask = deterministic_mask(MaskDistribution((1, len(theta)), "2d", theta), k).values
    assert mask.sum() == k
    theta = np.asarray(theta)
    if 0 < k < len(theta):
        assert theta[mask == 1].min() >= theta[mask == 0].max()


def test_model_average():
    a = MaskDistribution((1, 2), "2d", [1.0, 0.0])
    b = MaskDistribution((1, 2), "2d", [0.0, 1.0])
    np.testing.assert_array_equal(model_average([a, b]).theta, [0.5, 0.5])
    np.testing.assert_array_equal(model_average([a, a]).theta, a.theta)
    with pytest.raises(DataValidationError):
        model_average([a, MaskDistribution((2, 1), "2d", [0.0, 1.0])])


def test_broadcast_lines():
    np.testing.assert_array_equal(broadcast_lines([1, 0], (2, 2)), [[1, 0], [1, 0]])
    np.testing.assert_array_equal(broadcast_lines(np.ones(5), (3, 5)), np.ones((3, 5)))
    assert broadcast_lines(np.ones((4, 5)), (3, 5)).shape == (4, 3, 5)
    with pytest.raises(DataValidationError):
        broadcast_lines([1, 0, 1], (2, 2))


def test_expected_density():
    assert expected_density(MaskDistribution((2, 2), "2d", np.full(4, 0.5))) == 0.5
    assert expected_density(MaskDistribution((2, 2), "2d", np.ones(4))) == 1.0
    assert expected_density(MaskDistribution((2, 2), "2d", [1, 0, 0, 0])) == 0.25


def test_binary_mask_rejects_soft_values():
    with pytest.raises(DataValidationError):
        BinaryMask([0, 0.5, 1])
    assert BinaryMask([0, 1, 1]).n_active == 2
