import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from david.errors import DataError
from david.kde import BandwidthRule
from david.weights import loss_weights, relevance_weights, weights_from_density


def _normal_pdf(x, var):
    return math.exp(-0.5 * x * x / var) / math.sqrt(2 * math.pi * var)


def test_alpha_zero_is_exactly_uniform(rng):
    rw = relevance_weights(rng.exponential(size=200), alpha=0)
    np.testing.assert_array_equal(rw.raw, np.ones(200))
    np.testing.assert_array_equal(rw.normalized, np.full(200, 1 / 200))


def test_two_density_example():
    raw, norm = weights_from_density([2.0, 1.0], 1.0)
    np.testing.assert_allclose(raw, [0.5, 1.0])
    np.testing.assert_allclose(norm, [1 / 3, 2 / 3], rtol=1e-15)


def test_contrived_sample_matches_hand_oracle():
    y = np.array([0.0, 0.0, 0.0, 10.0])
    eta = (4 / 3) ** 0.2 * 4 ** -0.2
    var = eta**2 * 18.75  # population variance of y is 18.75
    f0 = 0.75 * _normal_pdf(0, var) + 0.25 * _normal_pdf(10, var)
    f10 = 0.75 * _normal_pdf(10, var) + 0.25 * _normal_pdf(0, var)
    rw = relevance_weights(y, alpha=1)
    np.testing.assert_allclose(rw.density, [f0, f0, f0, f10], rtol=1e-12)
    np.testing.assert_allclose(rw.raw, 1 / rw.density, rtol=1e-14)
    assert rw.raw[3] > rw.raw[0]


def test_strict_monotonicity_on_contrived_sample():
    # lower density must mean strictly larger weight, for every pair
    y = np.array([0.0, 0.1, 0.3, 5.0])
    rw = relevance_weights(y)
    assert len(np.unique(rw.density)) == 4
    for i in range(4):
        for j in range(4):
            if rw.density[i] < rw.density[j]:
                assert rw.raw[i] > rw.raw[j]
    assert np.argmax(rw.raw) == 3


def test_alpha_two_is_square_of_alpha_one(rng):
    y = rng.lognormal(size=300)
    one = relevance_weights(y, alpha=1).raw
    two = relevance_weights(y, alpha=2).raw
    assert np.max(np.abs(two - one**2) / one**2) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0))
def test_exponent_identity_and_normalisation(seed, alpha):
    y = np.random.default_rng(seed).normal(size=40)
    rw = relevance_weights(y, alpha=alpha)
    np.testing.assert_allclose(rw.raw, rw.density ** (-alpha), rtol=1e-12)
    assert abs(rw.normalized.sum() - 1) < 1e-12
    assert np.all(rw.raw > 0)
    assert abs(loss_weights(rw).mean() - 1) < 1e-12


def test_rarer_targets_get_larger_weights(rng):
    y = rng.normal(size=2000)
    rw = relevance_weights(y)
    order = np.argsort(np.abs(y))
    # tails outweigh the centre
    assert rw.raw[order[-50:]].min() > rw.raw[order[:50]].max()


def test_uniform_target_gives_flat_interior_weights():
    y = np.linspace(0, 1, 2001)
    rw = relevance_weights(y)
    interior = rw.raw[(y > 0.25) & (y < 0.75)]
    assert interior.max() / interior.min() < 1.05


def test_rule_is_recorded_and_used():
    y = np.array([0.0, 1.0, 2.0, 7.0])
    a = relevance_weights(y, rule=BandwidthRule.scott())
    b = relevance_weights(y, rule=BandwidthRule.silverman())
    assert a.bandwidth_rule == BandwidthRule.scott()
    assert not np.allclose(a.raw, b.raw)


def test_errors():
    with pytest.raises(DataError):
        relevance_weights([1.0])
    with pytest.raises(DataError):
        relevance_weights([2.0, 2.0, 2.0])
    with pytest.raises(DataError):
        weights_from_density([1.0], -1)
