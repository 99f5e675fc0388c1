"""Kernel-level checks: frozen oracle values, reductions, properties.

Expected values marked "quadrature oracle" were computed with the mpmath
routines in `oracles.py` at 40 digits and frozen here; the oracle itself
runs in the slow tests and in `pidimpute selftest`.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pidimpute import kernels as K
from pidimpute.errors import FactorizationError, ParameterDomainError

from oracles import trunc_moments_quadrature

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class TestPdfCdfRatio:
    def test_at_zero_exact(self):
        assert K.normal_pdf_cdf_ratio(0.0) == pytest.approx(SQRT_2_OVER_PI, abs=1e-15)

    def test_far_positive_tail(self):
        # quadrature oracle: phi(8)/Phi(8)
        assert K.normal_pdf_cdf_ratio(8.0) == pytest.approx(
            5.0522710835368954e-15, rel=1e-12
        )

    def test_far_negative_tail(self):
        # quadrature oracle; naive phi/Phi is 0/0 here
        assert K.normal_pdf_cdf_ratio(-8.0) == pytest.approx(
            8.1213681122361127, rel=1e-12
        )

    def test_vectorized(self):
        t = np.array([-8.0, 0.0, 8.0])
        out = K.normal_pdf_cdf_ratio(t)
        assert out.shape == (3,)
        assert np.all(np.isfinite(out)) and np.all(out > 0)

    @given(st.floats(min_value=-40, max_value=40))
    def test_total_and_positive(self, t):
        r = K.normal_pdf_cdf_ratio(t)
        assert np.isfinite(r) and r >= 0
        if t <= 30:  # beyond that phi(t) underflows to a true double 0
            assert r > 0


class TestTruncatedMoments:
    def test_half_normal(self):
        mom = K.truncated_normal_moments(0.0, 1.0)
        assert mom.e1 == pytest.approx(SQRT_2_OVER_PI, abs=1e-15)
        assert mom.e2 == pytest.approx(1.0, abs=1e-15)

    def test_unit_positive_center(self):
        # quadrature oracle for TN(1, 1, 0, inf)
        mom = K.truncated_normal_moments(1.0, 1.0)
        assert mom.e1 == pytest.approx(1.2875999709391784, abs=1e-12)
        assert mom.e2 == pytest.approx(2.2875999709391784, abs=1e-12)

    def test_deep_truncation(self):
        # quadrature oracle for TN(-5, 1, 0, inf); stays finite and positive
        mom = K.truncated_normal_moments(-5.0, 1.0)
        assert mom.e1 == pytest.approx(0.18650396712584212, abs=1e-10)
        assert mom.e2 == pytest.approx(0.067480164370789422, abs=1e-10)

    def test_rejects_bad_sigma(self):
        with pytest.raises(ParameterDomainError):
            K.truncated_normal_moments(0.0, 0.0)
        with pytest.raises(ParameterDomainError):
            K.truncated_normal_moments(0.0, -1.0)

    @pytest.mark.slow
    @pytest.mark.parametrize("a", [-8.0, -5.0, -2.0, -1.0, 0.0, 1.0, 2.0, 5.0, 8.0])
    def test_against_quadrature_oracle(self, a):
        e1_q, e2_q = trunc_moments_quadrature(a, 1.0)
        mom = K.truncated_normal_moments(a, 1.0)
        assert mom.e1 == pytest.approx(e1_q, abs=1e-8)
        assert mom.e2 == pytest.approx(e2_q, abs=1e-8)

    @given(
        st.floats(min_value=-8, max_value=8),
        st.floats(min_value=0.05, max_value=20),
    )
    @settings(max_examples=200)
    def test_variance_bounds(self, ratio, sigma):
        mom = K.truncated_normal_moments(ratio * sigma, sigma)
        var = mom.e2 - mom.e1**2
        assert 0.0 < var <= sigma**2 * (1 + 1e-12)


class TestNormalDensity:
    def test_at_mean_identity_2d(self):
        assert K.mn_pdf([0.0, 0.0], [0.0, 0.0], np.eye(2)) == pytest.approx(
            1.0 / (2.0 * math.pi), rel=1e-14
        )

    def test_scalar_variance_four(self):
        # 1 / sqrt(2 pi * 4)
        assert K.mn_pdf([0.0], [0.0], [[4.0]]) == pytest.approx(
            0.19947114020071634, rel=1e-13
        )

    def test_far_tail_no_nan(self):
        # Mahalanobis^2 = 5000
        val = K.mn_pdf([math.sqrt(5000.0), 0.0], [0.0, 0.0], np.eye(2))
        assert np.isfinite(val) and val >= 0.0
        assert np.isfinite(K.mn_logpdf([math.sqrt(5000.0), 0.0], [0.0, 0.0], np.eye(2)))

    def test_singular_raises_with_component(self):
        with pytest.raises(FactorizationError) as err:
            K.mn_pdf([0.0, 0.0], [0.0, 0.0], np.zeros((2, 2)), component=4)
        assert err.value.component == 4

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(0)
        mu = rng.normal(size=3)
        a = rng.normal(size=(3, 3))
        sigma = a @ a.T + 3 * np.eye(3)
        xs = rng.normal(size=(5, 3))
        batch = K.mn_logpdf(xs, mu, sigma)
        singles = [K.mn_logpdf(x, mu, sigma) for x in xs]
        np.testing.assert_allclose(batch, singles, rtol=1e-13)


class TestSkewNormalDensity:
    def test_delta_zero_reduces_to_normal(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            p = rng.integers(1, 4)
            x = rng.normal(size=p)
            xi = rng.normal(size=p)
            a = rng.normal(size=(p, p))
            sigma = a @ a.T + p * np.eye(p)
            msn = K.msn_pdf(x, xi, sigma, np.zeros(p))
            mn = K.mn_pdf(x, xi, sigma)
            assert msn == pytest.approx(mn, rel=1e-14)

    def test_scalar_value_at_zero(self):
        # X = |U| + V with U, V standard normal: f(0) = 1 / (2 sqrt(pi)),
        # from the scalar formula 2 phi(0; 0, 2) Phi(0) with Omega = 2
        val = K.msn_pdf([0.0], [0.0], [[1.0]], [1.0])
        assert val == pytest.approx(1.0 / (2.0 * math.sqrt(math.pi)), rel=1e-13)

    def test_skew_feasibility_error(self):
        # an Omega passed as Sigma with huge delta cannot break feasibility
        # when built internally, so force it through a tiny scale instead
        with pytest.raises(ParameterDomainError):
            K._skew_projection(np.array([[1e-18]]), np.array([1.0]))

    def test_normalizes_1d(self):
        val, _ = integrate.quad(
            lambda t: K.msn_pdf(np.array([t]), [0.4], [[0.7]], [-1.2]), -14, 14
        )
        assert val == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.slow
    def test_normalizes_2d_quadrature(self):
        rng = np.random.default_rng(7)
        xi = rng.normal(scale=0.3, size=2)
        a = rng.normal(size=(2, 2))
        sigma = a @ a.T + np.eye(2)
        delta = rng.normal(size=2)
        val, _ = integrate.dblquad(
            lambda y, x: K.msn_pdf(np.array([x, y]), xi, sigma, delta),
            -10,
            10,
            -10,
            10,
            epsabs=1e-9,
        )
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_no_nan_on_extreme_inputs(self):
        val = K.msn_logpdf([50.0, -50.0], [0.0, 0.0], np.eye(2), [0.9, -0.9])
        assert np.isfinite(val)

    @pytest.mark.slow
    def test_sampling_moments(self):
        # mean xi + sqrt(2/pi) delta, covariance Sigma + (1 - 2/pi) dd'
        rng = np.random.default_rng(99)
        xi = np.array([0.5, -1.0])
        sigma = np.array([[1.0, 0.2], [0.2, 0.6]])
        delta = np.array([1.1, -0.7])
        n = 10**6
        draws = K.sample_msn(xi, sigma, delta, n, rng)
        mean_true = xi + SQRT_2_OVER_PI * delta
        cov_true = sigma + (1 - 2 / math.pi) * np.outer(delta, delta)
        se_mean = np.sqrt(np.diag(cov_true) / n)
        assert np.all(np.abs(draws.mean(axis=0) - mean_true) < 4 * se_mean)
        cov_sample = np.cov(draws.T)
        # SE of a covariance entry is ~ sqrt((s_ii s_jj + s_ij^2) / n)
        for i in range(2):
            for j in range(2):
                se = math.sqrt(
                    (cov_true[i, i] * cov_true[j, j] + cov_true[i, j] ** 2) / n
                )
                assert abs(cov_sample[i, j] - cov_true[i, j]) < 4 * se


class TestPartition:
    def test_all_observed_degenerate(self):
        part = K.BlockPartition.from_mask(np.array([True, True]))
        blocks = K.partition_gaussian(np.zeros(2), np.eye(2), part)
        assert blocks.regression.shape == (0, 2)
        assert blocks.sigma_mm.shape == (0, 0)

    def test_diagonal_gives_zero_regression(self):
        part = K.BlockPartition.from_mask(np.array([True, False]))
        blocks = K.partition_gaussian(np.zeros(2), np.diag([2.0, 3.0]), part)
        np.testing.assert_array_equal(blocks.regression, np.zeros((1, 1)))
        assert blocks.schur[0, 0] == pytest.approx(3.0)

    def test_correlated_hand_check(self):
        # Sigma = [[1, .8], [.8, 1]], observed = {0}: regression = 0.8,
        # Schur = 1 - 0.64 = 0.36
        part = K.BlockPartition.from_mask(np.array([True, False]))
        blocks = K.partition_gaussian(
            np.zeros(2), np.array([[1.0, 0.8], [0.8, 1.0]]), part
        )
        assert blocks.regression[0, 0] == pytest.approx(0.8, abs=1e-15)
        assert blocks.schur[0, 0] == pytest.approx(0.36, abs=1e-15)

    def test_singular_block_names_pattern(self):
        part = K.BlockPartition.from_mask(np.array([True, True, False]))
        sigma = np.ones((3, 3))  # singular observed block
        with pytest.raises(FactorizationError) as err:
            K.partition_gaussian(np.zeros(3), sigma, part)
        assert err.value.pattern == (0, 1)

    def test_partition_invariants(self):
        part = K.BlockPartition.from_mask(np.array([True, False, True, False]))
        assert set(part.observed_idx) | set(part.missing_idx) == {0, 1, 2, 3}
        assert not set(part.observed_idx) & set(part.missing_idx)
