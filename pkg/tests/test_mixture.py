"""
Tests for negmm.mixture
"""

import numpy as np
import pytest
from scipy import integrate

from negmm.errors import DomainError
from negmm.mixture import (
    MixtureParams,
    component_log_pdf,
    mixture_cdf,
    mixture_log_pdf,
    mixture_pdf,
    mixture_quantile,
    mixture_sample,
    predictive_moments,
    rescale,
)
from negmm.models import HeadBounds
from negmm.verification import random_mixture


class TestValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(DomainError):
            MixtureParams([0.5, 0.6], [0.0, 1.0], [1.0, 1.0])

    def test_stds_must_be_positive(self):
        with pytest.raises(DomainError):
            MixtureParams([0.5, 0.5], [0.0, 1.0], [1.0, 0.0])

    def test_shapes_must_agree(self):
        with pytest.raises(DomainError):
            MixtureParams([0.5, 0.5], [0.0], [1.0, 1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            MixtureParams([1.0], [np.nan], [1.0])

    def test_bounds_are_checked_not_clamped(self):
        bounds = HeadBounds(m_mu=5.0, sigma_min=0.1, sigma_max=10.0, pi_min=0.01)
        MixtureParams([0.5, 0.5], [4.0, -5.0], [0.1, 10.0], bounds)
        with pytest.raises(DomainError):
            MixtureParams([0.5, 0.5], [6.0, 0.0], [1.0, 1.0], bounds)
        with pytest.raises(DomainError):
            MixtureParams([0.5, 0.5], [0.0, 0.0], [0.05, 1.0], bounds)
        with pytest.raises(DomainError):
            MixtureParams([0.995, 0.005], [0.0, 0.0], [1.0, 1.0], bounds)

    def test_arrays_are_read_only(self, two_component):
        with pytest.raises(ValueError):
            two_component.means[0] = 3.0

    def test_head_rounding_at_k1_is_accepted(self):
        pi_min = 1e-6
        w = (1.0 - pi_min) * 1.0 + pi_min
        MixtureParams([w], [0.0], [1.0], HeadBounds(pi_min=pi_min))


class TestDensity:
    def test_standard_normal_log_density(self, std_normal):
        assert mixture_log_pdf(std_normal, 0.0) == pytest.approx(-0.9189385332046727, abs=1e-15)

    def test_integrates_to_one(self, two_component):
        total, _ = integrate.quad(lambda y: mixture_pdf(two_component, y), -np.inf, np.inf)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_random_mixtures_integrate_to_one(self, rng):
        for _ in range(10):
            params = random_mixture(rng)
            reach = 10.0 * params.stds.max()
            total, _ = integrate.quad(
                lambda y: mixture_pdf(params, y),
                params.means.min() - reach,
                params.means.max() + reach,
                points=sorted(params.means),
                limit=200,
            )
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_far_tail_stays_finite(self):
        params = MixtureParams([0.5, 0.5], [0.0, 1.0], [1e-3, 1e-3])
        assert np.isfinite(mixture_log_pdf(params, 50.0))

    def test_component_log_pdf_shape(self, mixture_batch):
        y = np.zeros(len(mixture_batch))
        assert component_log_pdf(mixture_batch, y).shape == (8, 3)

    def test_label_permutation_invariance(self, two_component):
        swapped = two_component.permuted([1, 0])
        ys = np.linspace(-4, 6, 11)
        np.testing.assert_allclose(mixture_pdf(two_component, ys), mixture_pdf(swapped, ys), rtol=1e-14)

    def test_batch_matches_pointwise(self, mixture_batch):
        y = np.linspace(-1.0, 1.0, len(mixture_batch))
        batched = mixture_log_pdf(mixture_batch, y)
        single = [mixture_log_pdf(mixture_batch.point(i), y[i]) for i in range(len(mixture_batch))]
        np.testing.assert_allclose(batched, single, rtol=1e-14)

    def test_non_finite_y(self, std_normal):
        with pytest.raises(DomainError):
            mixture_log_pdf(std_normal, np.inf)


class TestMoments:
    def test_two_component(self, two_component):
        summary = predictive_moments(two_component)
        assert summary.mean == pytest.approx(1.1)
        assert summary.variance == pytest.approx(3.54)
        assert summary.std == pytest.approx(np.sqrt(3.54))

    def test_bimodal_cubic_variance_at_two(self):
        params = MixtureParams([0.3, 0.7], [-8.0, 8.0], [3.0, 3.0])
        summary = predictive_moments(params)
        assert summary.mean == pytest.approx(3.2)
        assert summary.variance == pytest.approx(9.0 + 0.84 * 2 ** 6)

    def test_single_component(self):
        summary = predictive_moments(MixtureParams([1.0], [2.5], [0.7]))
        assert summary.mean == 2.5
        assert summary.variance == pytest.approx(0.49)


class TestSampling:
    def test_moments_of_draws(self, two_component, rng):
        z = mixture_sample(two_component, rng, 200_000)
        assert z.shape == (200_000,)
        se_mean = np.sqrt(3.54 / z.size)
        assert abs(z.mean() - 1.1) < 4 * se_mean
        assert z.var() == pytest.approx(3.54, rel=0.02)

    def test_batch_shape(self, mixture_batch, rng):
        assert mixture_sample(mixture_batch, rng, 5).shape == (5, 8)

    def test_zero_draws(self, std_normal, rng):
        assert mixture_sample(std_normal, rng, 0).shape == (0,)

    def test_reproducible(self, two_component):
        a = mixture_sample(two_component, np.random.default_rng(7), 100)
        b = mixture_sample(two_component, np.random.default_rng(7), 100)
        np.testing.assert_array_equal(a, b)


class TestQuantile:
    def test_cdf_is_monotone(self, rng):
        for _ in range(10):
            params = random_mixture(rng)
            ys = np.sort(rng.uniform(-40.0, 40.0, 500))
            cdf = mixture_cdf(params, ys)
            assert np.all(np.diff(cdf) >= 0.0)
            assert 0.0 <= cdf[0] and cdf[-1] <= 1.0

    def test_normal_quantile(self, std_normal):
        assert mixture_quantile(std_normal, 0.975) == pytest.approx(1.959963984540054, abs=1e-9)

    def test_inverts_cdf(self, two_component):
        for y in (-3.0, -1.0, 0.0, 1.5, 5.0):
            p = mixture_cdf(two_component, y)
            assert mixture_quantile(two_component, p) == pytest.approx(y, abs=1e-8)

    def test_extreme_levels_bracket(self):
        params = MixtureParams([0.5, 0.5], [0.0, 100.0], [0.01, 0.01])
        q = mixture_quantile(params, 1e-12)
        assert mixture_cdf(params, q) == pytest.approx(1e-12, rel=1e-4)

    def test_batch(self, mixture_batch):
        q = mixture_quantile(mixture_batch, 0.3)
        assert q.shape == (8,)
        np.testing.assert_allclose(mixture_cdf(mixture_batch, q), 0.3, atol=1e-10)

    @pytest.mark.parametrize("p", [0.01, 0.3, 0.5, 0.7, 0.99])
    def test_mixed_scales(self, p):
        params = MixtureParams([0.5, 0.5], [0.0, 0.0], [1e-3, 1e3])
        assert abs(mixture_cdf(params, mixture_quantile(params, p)) - p) <= 1e-9

    def test_mixed_scales_batch(self):
        params = MixtureParams([[0.5, 0.5], [0.9, 0.1]], [[0.0, 0.0], [-2.0, 5.0]], [[1e-3, 1e3], [1e-2, 50.0]])
        q = mixture_quantile(params, np.array([0.3, 0.8]))
        np.testing.assert_allclose(mixture_cdf(params, q), [0.3, 0.8], atol=1e-9)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, np.nan])
    def test_invalid_level(self, std_normal, p):
        with pytest.raises(DomainError):
            mixture_quantile(std_normal, p)


class TestRescaleAndRecords:
    def test_change_of_variables(self, two_component):
        scaled = rescale(two_component, 2.0, 3.0)
        for y in (-2.0, 0.0, 1.0):
            assert mixture_pdf(scaled, 2.0 * y + 3.0) == pytest.approx(mixture_pdf(two_component, y) / 2.0)

    def test_bounds_follow(self):
        bounds = HeadBounds(m_mu=10.0, sigma_min=0.1, sigma_max=5.0)
        params = MixtureParams([1.0], [10.0], [5.0], bounds)
        scaled = rescale(params, 3.0, -4.0)
        assert scaled.bounds.sigma_max == pytest.approx(15.0)
        assert scaled.means[0] == pytest.approx(26.0)

    def test_negative_scale(self, std_normal):
        with pytest.raises(DomainError):
            rescale(std_normal, -1.0)

    def test_record_round_trip(self, two_component):
        back = MixtureParams.from_record(two_component.to_record())
        np.testing.assert_array_equal(back.weights, two_component.weights)
        np.testing.assert_array_equal(back.means, two_component.means)
        np.testing.assert_array_equal(back.stds, two_component.stds)

    def test_record_k_mismatch(self, two_component):
        record = {**two_component.to_record(), "k": 3}
        with pytest.raises(DomainError):
            MixtureParams.from_record(record)

    def test_stack(self, two_component):
        batch = MixtureParams.stack([two_component, two_component.permuted([1, 0])])
        assert batch.batch_shape == (2,)
        assert len(batch) == 2
