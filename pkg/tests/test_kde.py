import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import gaussian_kde

from david.errors import ConfigError, DataError, NotPositiveDefiniteError, NumericError
from david.kde import (
    BandwidthRule,
    KdeModel,
    bandwidth_factor,
    cholesky,
    density_at,
    fit_kde,
    sample,
    sample_from_seed,
    weighted_covariance,
)


def _model(points, weights, h):
    """1-D mixture with an explicit kernel variance ``h``."""
    pts = np.asarray(points, dtype=float)[:, None]
    w = np.full(len(pts), 1.0 / len(pts)) if weights is None else np.asarray(weights, dtype=float)
    return KdeModel(pts, w / w.sum(), np.array([[h]]), np.array([[math.sqrt(h)]]))


class TestBandwidth:
    def test_scott(self):
        # 1000 ** (-1/7) by logs: exp(-ln(1000)/7)
        expected = math.exp(-math.log(1000) / 7)
        assert bandwidth_factor(BandwidthRule.scott(), 1000, 3) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.3728, abs=1e-4)

    def test_silverman(self):
        expected = math.exp((math.log(0.8) - math.log(1000)) / 7)
        assert bandwidth_factor(BandwidthRule.silverman(), 1000, 3) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.3611, abs=1e-4)

    def test_fixed(self):
        assert bandwidth_factor(BandwidthRule.fixed(0.5), 10, 2) == 0.5
        assert bandwidth_factor(BandwidthRule.fixed(0.5), 99999, 7) == 0.5

    def test_errors(self):
        with pytest.raises(DataError):
            bandwidth_factor(BandwidthRule.scott(), 1, 2)
        with pytest.raises(ConfigError):
            BandwidthRule.fixed(-1.0)
        with pytest.raises(ConfigError):
            BandwidthRule("bogus")

    def test_parse(self):
        assert BandwidthRule.parse("Scott") == BandwidthRule.scott()
        assert BandwidthRule.parse("fixed:0.25") == BandwidthRule.fixed(0.25)
        assert BandwidthRule.parse(str(BandwidthRule.fixed(0.25))) == BandwidthRule.fixed(0.25)


class TestWeightedCovariance:
    def test_two_points(self):
        np.testing.assert_allclose(weighted_covariance([[-1.0], [1.0]]), [[1.0]])

    def test_uniform_is_population_covariance(self, rng):
        pts = rng.normal(size=(50, 3))
        np.testing.assert_allclose(weighted_covariance(pts), np.cov(pts.T, bias=True), atol=1e-12)

    def test_two_pass_oracle(self, rng):
        pts = rng.normal(size=(50, 3)) * [1, 5, 0.1]
        w = rng.uniform(size=50)
        w /= w.sum()
        mean = [sum(w[i] * pts[i, j] for i in range(50)) for j in range(3)]
        oracle = np.zeros((3, 3))
        for a in range(3):
            for b in range(3):
                oracle[a, b] = sum(w[i] * (pts[i, a] - mean[a]) * (pts[i, b] - mean[b]) for i in range(50))
        np.testing.assert_allclose(weighted_covariance(pts, w), oracle, atol=1e-10)

    def test_identical_points_give_zero(self):
        np.testing.assert_array_equal(weighted_covariance(np.ones((4, 2))), np.zeros((2, 2)))


class TestCholesky:
    def test_identity_and_diagonal(self):
        np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
        np.testing.assert_array_equal(cholesky([[4.0, 0], [0, 9.0]]), [[2.0, 0], [0, 3.0]])

    def test_random_pd_round_trip(self, rng):
        a = rng.normal(size=(5, 5))
        spd = a.T @ a + np.eye(5)
        L = cholesky(spd)
        assert np.allclose(L, np.tril(L))
        assert np.max(np.abs(L @ L.T - spd)) < 1e-10
        np.testing.assert_allclose(L, np.linalg.cholesky(spd), atol=1e-12)

    def test_non_pd_reports_pivot(self):
        with pytest.raises(NotPositiveDefiniteError) as info:
            cholesky([[1.0, 2.0], [2.0, 1.0]])
        assert info.value.pivot_index == 1


class TestFit:
    def test_fixed_one_rho_one_is_covariance(self, rng):
        pts = rng.normal(size=(40, 2))
        m = fit_kde(pts, rule=BandwidthRule.fixed(1.0), noise_scale=1.0)
        np.testing.assert_array_equal(m.bandwidth_cov, weighted_covariance(pts))

    def test_noise_scale_scales_h_and_chol(self, rng):
        pts = rng.normal(size=(40, 3))
        full = fit_kde(pts, noise_scale=1.0)
        tenth = fit_kde(pts, noise_scale=0.1)
        np.testing.assert_allclose(tenth.bandwidth_cov, 0.1 * full.bandwidth_cov, rtol=1e-12)
        np.testing.assert_allclose(tenth.chol_lower, math.sqrt(0.1) * full.chol_lower, rtol=1e-12, atol=1e-15)

    def test_squared_versus_linear_convention(self, rng):
        pts = rng.normal(size=(100, 2))
        eta = bandwidth_factor(BandwidthRule.silverman(), 100, 2)
        sq = fit_kde(pts, squared=True)
        lin = fit_kde(pts, squared=False)
        cov = weighted_covariance(pts)
        np.testing.assert_allclose(sq.bandwidth_cov, eta**2 * cov, rtol=1e-12)
        np.testing.assert_allclose(lin.bandwidth_cov, eta * cov, rtol=1e-12)

    def test_invariants(self, rng):
        pts = rng.normal(size=(30, 4))
        w = rng.uniform(size=30)
        m = fit_kde(pts, w, BandwidthRule.scott(), 0.3)
        assert abs(m.weights.sum() - 1) < 1e-12
        assert np.max(np.abs(m.chol_lower @ m.chol_lower.T - m.bandwidth_cov)) < 1e-10
        assert np.max(np.abs(m.bandwidth_cov - m.bandwidth_cov.T)) < 1e-12

    def test_near_duplicate_points_get_jitter(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])  # rank-1 covariance
        m = fit_kde(pts)
        assert np.max(np.abs(m.chol_lower @ m.chol_lower.T - m.bandwidth_cov)) < 1e-10

    def test_identical_points_error(self):
        with pytest.raises(NumericError):
            fit_kde(np.ones((5, 2)))

    def test_bad_noise_scale(self):
        with pytest.raises(ConfigError):
            fit_kde([0.0, 1.0, 2.0], noise_scale=0.0)


class TestDensity:
    def test_symmetric_pair_midpoint(self):
        m = _model([-1.0, 1.0], None, 1.0)
        assert density_at(m, [0.0]) == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi), rel=1e-12)
        assert density_at(m, [0.0]) == pytest.approx(0.24197, abs=1e-5)

    def test_single_point_peak(self):
        # a one-hot weighted mixture behaves like one kernel at its support point
        m = _model([0.0, 50.0], [1.0, 0.0], 1.0)
        assert density_at(m, [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)

    def test_matches_scipy_gaussian_kde(self, rng):
        pts = rng.normal(size=(60, 2)) @ [[1.0, 0.4], [0.0, 0.7]]
        ours = fit_kde(pts)
        m = len(pts)
        eta = bandwidth_factor(BandwidthRule.silverman(), m, 2)
        # scipy uses the (m-1)-normalised covariance
        ref = gaussian_kde(pts.T, bw_method=eta * math.sqrt((m - 1) / m))
        q = rng.normal(size=(25, 2))
        np.testing.assert_allclose(ours.density(q), ref(q.T), rtol=1e-10)

    def test_integrates_to_one_1d(self, rng):
        pts = rng.gamma(2.0, size=40)
        m = fit_kde(pts, rng.uniform(size=40))
        sd = math.sqrt(weighted_covariance(pts)[0, 0] + m.bandwidth_cov[0, 0])
        grid = np.linspace(pts.min() - 10 * sd, pts.max() + 10 * sd, 20001)
        assert np.trapezoid(m.density(grid), grid) == pytest.approx(1.0, abs=1e-3)

    def test_integrates_to_one_2d(self, rng):
        pts = rng.normal(size=(20, 2))
        m = fit_kde(pts)
        g = np.linspace(-8, 8, 401)
        xx, yy = np.meshgrid(g, g)
        dens = m.density(np.column_stack([xx.ravel(), yy.ravel()])).reshape(xx.shape)
        total = np.trapezoid(np.trapezoid(dens, g, axis=1), g)
        assert total == pytest.approx(1.0, abs=1e-2)

    def test_dimension_mismatch(self, rng):
        m = fit_kde(rng.normal(size=(10, 2)))
        with pytest.raises(DataError):
            density_at(m, [0.0, 0.0, 0.0])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, seed):
        r = np.random.default_rng(seed)
        pts = r.normal(size=(12, 2))
        w = r.uniform(0.1, 1, size=12)
        perm = r.permutation(12)
        a = fit_kde(pts, w, BandwidthRule.fixed(0.4))
        b = fit_kde(pts[perm], w[perm], BandwidthRule.fixed(0.4))
        q = r.normal(size=(5, 2))
        np.testing.assert_allclose(a.density(q), b.density(q), rtol=1e-9)


class TestSampling:
    def test_zero_bandwidth_returns_seed(self, rng):
        pts = rng.normal(size=(10, 3))
        m = fit_kde(pts, rule=BandwidthRule.fixed(0.0))
        np.testing.assert_array_equal(sample_from_seed(m, 4, rng), pts[4])

    def test_seed_moments(self):
        m = _model([5.0, -3.0], [1.0, 0.0], 4.0)
        r = np.random.default_rng(0)
        draws = m.sample_at(np.zeros(100_000, dtype=int), r)[:, 0]
        assert draws.mean() == pytest.approx(5.0, abs=0.02)
        assert draws.var() == pytest.approx(4.0, abs=0.1)

    def test_reproducible(self, rng):
        m = fit_kde(rng.normal(size=(10, 2)))
        a = sample_from_seed(m, 2, np.random.default_rng(9))
        b = sample_from_seed(m, 2, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)
        with pytest.raises(DataError):
            sample_from_seed(m, 10, rng)

    def test_one_hot_weights(self):
        m = _model([0.0, 1.0, 2.0], [0.0, 1.0, 0.0], 0.01)
        draws = sample(m, 100_000, np.random.default_rng(1))
        assert draws.mean() == pytest.approx(1.0, abs=0.002)

    def test_seed_frequencies(self):
        m = _model([-1.0, 1.0], None, 1e-4)
        draws = sample(m, 100_000, np.random.default_rng(2))[:, 0]
        assert np.mean(draws > 0) == pytest.approx(0.5, abs=0.01)

    def test_empty(self, rng):
        m = fit_kde(rng.normal(size=(10, 2)))
        assert sample(m, 0, rng).shape == (0, 2)

    def test_mixture_moments(self):
        r = np.random.default_rng(3)
        pts = r.normal(size=(15, 2)) * [1.0, 2.0]
        w = r.uniform(size=15)
        m = fit_kde(pts, w, BandwidthRule.silverman(), 1.0)
        n = 100_000
        draws = sample(m, n, r)
        mean = m.weights @ pts
        cov = weighted_covariance(pts, w) + m.bandwidth_cov
        se = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se)
        # standard error of a covariance entry: sqrt((s_aa s_bb + s_ab^2)/n) (Gaussian approx, loose for mixtures)
        emp = np.cov(draws.T, bias=True)
        se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
        assert np.all(np.abs(emp - cov) < 4 * se_cov)
