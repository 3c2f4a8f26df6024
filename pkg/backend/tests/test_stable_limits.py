"""Stable laws, truncated Poisson integrals and the moving-average limit"""

import math

import numpy as np
import pytest

from errors import CompensatorMismatch, DimensionMismatch, DomainError, TruncationBudgetError
from services.funcspec import FunctionalSpec, LimitProfile
from services.stable_limits import (
    MIN_AUTO_EPS,
    PointBuffer,
    PointKind,
    StableParams,
    auto_eps,
    auto_r_max,
    buffer_integral,
    cf_stable,
    codifference,
    compensated_integral,
    joint_cf_moving_average,
    kernel_tail_fraction,
    levysub_check,
    map_psi_to_theta,
    moving_average_params,
    sample_I,
    sample_levy_integral,
    sample_moving_average,
    sample_poisson_points,
    sample_stable,
    sample_truncation_residual,
    sigma_from_levy_density,
    truncation_variance,
)
from services.verify import ecf_threshold

THETAS = (0.5, 1.0, 2.0)


def empirical_cf(sample, theta):
    return complex(np.mean(np.exp(1j * theta * np.asarray(sample))))


def assert_cf_close(sample, params, thetas=THETAS, tolerance=0.05):
    for theta in thetas:
        gap = abs(empirical_cf(sample, theta) - cf_stable(params, theta))
        assert gap <= tolerance, f"theta={theta}: |ecf - cf| = {gap:.4f}"


@pytest.fixture
def tau():
    return FunctionalSpec.parse('tau', 1.5)


class TestStableLaw:

    @pytest.mark.parametrize('kwargs', [
        dict(alpha=1.5, sigma=0.0, beta=0.0),
        dict(alpha=1.5, sigma=1.0, beta=1.5),
        dict(alpha=2.0, sigma=1.0, beta=0.0),
        dict(alpha=1.5, sigma=1.0, beta=0.0, mu=1.0),
    ])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(DomainError):
            StableParams(**kwargs)

    def test_cf_at_zero(self):
        assert cf_stable(StableParams(1.5, 2.0, -1.0), 0.0) == 1.0

    def test_cf_conjugate_symmetry(self):
        params = StableParams(1.3, 0.7, 0.4)
        theta = np.array([0.3, 1.1])
        np.testing.assert_allclose(cf_stable(params, -theta), np.conj(cf_stable(params, theta)))

    @pytest.mark.parametrize('beta', [0.0, -1.0, 1.0])
    def test_sampler_matches_cf(self, rng, beta):
        params = StableParams(1.5, 0.8, beta)
        draws = sample_stable(params, rng, 20_000)
        assert draws.shape == (20_000,)
        assert_cf_close(draws, params, tolerance=0.04)

    def test_scalar_draw(self, rng):
        assert isinstance(sample_stable(StableParams(1.5, 1.0, 0.0), rng), float)

    def test_levy_density_scale(self):
        # Levy tail constant b/alpha of S(sigma, 1) is sigma^alpha sin(pi alpha/2) Gamma(alpha) 2/pi
        a, b = 1.5, 0.8
        sigma = sigma_from_levy_density(b, a)
        assert b / a == pytest.approx(2.0 / math.pi * sigma ** a * math.sin(math.pi * a / 2) * math.gamma(a), rel=1e-12)


class TestLevyIntegral:

    def test_truncated_sum_plus_residual_is_stable(self, rng):
        b, a, eps = 1.0, 1.5, 0.1
        size = 4000
        values = sample_levy_integral(b, a, eps, rng, size) + sample_truncation_residual(b, a, eps, rng, size)
        params = StableParams(a, sigma_from_levy_density(b, a), 1.0)
        assert_cf_close(values, params, thetas=(0.5, 1.0), tolerance=0.07)

    def test_residual_variance(self, rng):
        b, a, eps = 1.0, 1.5, 0.1
        residual = sample_truncation_residual(b, a, eps, rng, 20_000)
        assert np.mean(residual) == pytest.approx(0.0, abs=0.03)
        assert np.var(residual) == pytest.approx(b * eps ** (2 - a) / (2 - a), rel=0.1)

    def test_eps_must_be_positive(self, rng):
        with pytest.raises(DomainError):
            sample_levy_integral(1.0, 1.5, 0.0, rng, 10)


class TestPointBuffers:

    def test_psi_points(self, rng, profile):
        buffer = sample_poisson_points('psi', (-2.0, 1.0), 0.05, rng, profile)
        assert buffer.kind is PointKind.PSI
        assert np.all(buffer.second >= 0.05)
        assert np.all((buffer.first >= -2.0) & (buffer.first <= 1.0))
        assert np.all(np.diff(buffer.first) >= 0.0)

    def test_point_count(self, rng, profile):
        eps, width = 0.05, 20.0
        expected = width * profile.levy_constant * eps ** -1.5 / 1.5
        buffer = sample_poisson_points(PointKind.LEVY, (0.0, width), eps, rng, profile)
        assert abs(len(buffer) - expected) <= 5.0 * math.sqrt(expected)

    def test_restrict(self, rng, profile):
        buffer = sample_poisson_points('psi', (-1.0, 0.0), 0.05, rng, profile)
        sub = buffer.restrict(0.2)
        assert sub.eps == 0.2
        assert len(sub) == int(np.sum(buffer.second >= 0.2))
        with pytest.raises(DomainError):
            sub.restrict(0.1)

    def test_points_below_truncation(self):
        with pytest.raises(DomainError):
            PointBuffer(PointKind.PSI, np.array([0.1]), np.array([0.01]), 0.05, (0.0, 1.0))

    def test_theta_window(self, rng, profile):
        with pytest.raises(DomainError):
            sample_poisson_points('theta', (0.5, 1.5), 0.1, rng, profile)

    def test_psi_to_theta(self, rng, profile):
        buffer = sample_poisson_points('psi', (-3.0, 1.0), 0.05, rng, profile)
        mapped = map_psi_to_theta(buffer, profile)
        assert mapped.scaled_floor
        assert len(mapped) == int(np.sum(buffer.first <= 0.0))
        assert np.all((mapped.first > 0.0) & (mapped.first <= 1.0))
        assert mapped.window[0] == pytest.approx(float(profile.m(3.0)))
        with pytest.raises(DomainError):
            buffer_integral(mapped, lambda x: np.ones_like(x), 1.0, profile)

    def test_buffer_integral_is_centered(self, profile):
        rng = np.random.default_rng(5)
        values = []
        for _ in range(400):
            buffer = sample_poisson_points('theta', (0.2, 1.0), 0.05, rng, profile)
            values.append(buffer_integral(buffer, lambda x: x, 0.48, profile))
        assert abs(np.mean(values)) <= 5.0 * np.std(values) / math.sqrt(len(values))

    def test_compensator_mismatch(self):
        assert compensated_integral(np.array([1.0, 2.0]), 0.5) == pytest.approx(2.5)
        with pytest.raises(CompensatorMismatch):
            compensated_integral(np.array([1.0]), 0.5, reference=0.6)


class TestStableIntegral:

    def test_zero_functional(self, rng):
        np.testing.assert_array_equal(sample_I(FunctionalSpec.parse('0', 1.5), 0.01, rng, size=5), np.zeros(5))

    def test_scalar_draw(self, rng, tau, profile):
        assert isinstance(sample_I(tau, 0.05, rng, profile), float)

    @pytest.mark.parametrize('text, eps', [('tau', 0.01), ('x^-0.5 - 2', 0.05)])
    def test_matches_stable_law(self, rng, profile, text, eps):
        f = FunctionalSpec.parse(text, 1.5)
        sigma, beta = f.sigma_beta()
        draws = sample_I(f, eps, rng, profile, size=5000, gaussian_residual=True)
        assert_cf_close(draws, StableParams(1.5, sigma, beta), tolerance=0.05)

    def test_residual_variance_formula(self, tau):
        expected = 0.01 ** 0.5 * 0.75 / math.gamma(1.5) * tau.abs_power_integral()
        assert truncation_variance(tau, 0.01) == pytest.approx(expected)

    def test_auto_eps_floor(self, tau):
        assert auto_eps(tau, budget=1e-4) == MIN_AUTO_EPS

    def test_auto_eps_meets_budget(self, tau):
        eps = auto_eps(tau, budget=0.5)
        assert eps > MIN_AUTO_EPS
        sigma, _ = tau.sigma_beta()
        assert truncation_variance(tau, eps) / sigma ** 2 == pytest.approx(0.5, rel=1e-9)


class TestMovingAverage:

    def test_marginal_matches_joint_cf(self, tau, profile):
        params = moving_average_params(tau, profile)
        assert params.beta == pytest.approx(-1.0)
        for theta in (0.3, 1.0, -2.0):
            joint = joint_cf_moving_average(tau, profile, [0.0], [theta])
            assert abs(joint - cf_stable(params, theta)) < 1e-6

    def test_joint_cf_at_zero(self, tau, profile):
        assert joint_cf_moving_average(tau, profile, [0.0, 1.0], [0.0, 0.0]) == 1.0

    def test_joint_cf_dimensions(self, tau, profile):
        with pytest.raises(DimensionMismatch):
            joint_cf_moving_average(tau, profile, [0.0, 1.0], [1.0])

    def test_far_apart_times_factorize(self, tau, profile):
        joint = joint_cf_moving_average(tau, profile, [0.0, 500.0], [1.0, 1.0])
        single = joint_cf_moving_average(tau, profile, [0.0], [1.0])
        assert abs(joint - single * single) < 1e-3

    def test_nearby_times_do_not_factorize(self, tau, profile):
        joint = joint_cf_moving_average(tau, profile, [0.0, 0.1], [1.0, 1.0])
        single = joint_cf_moving_average(tau, profile, [0.0], [1.0])
        assert abs(joint - single * single) > 1e-2

    def test_factorization_gap_decays_with_lag(self, tau, profile):
        single = joint_cf_moving_average(tau, profile, [0.0], [1.0])
        gaps = [abs(joint_cf_moving_average(tau, profile, [0.0, lag], [1.0, 1.0]) - single * single)
                for lag in (5.0, 25.0, 125.0)]
        assert gaps[0] > gaps[1] > gaps[2] > 0.0

    def test_sampled_pair_factorizes_within_noise(self, rng, tau, profile):
        pairs = sample_moving_average(tau, profile, [0.0, 50.0], 0.01, None, rng, size=4000)
        single = joint_cf_moving_average(tau, profile, [0.0], [1.0])
        exact_gap = abs(joint_cf_moving_average(tau, profile, [0.0, 50.0], [1.0, 1.0]) - single * single)
        joint_hat = np.mean(np.exp(1j * pairs.sum(axis=1)))
        product_hat = np.mean(np.exp(1j * pairs[:, 0])) * np.mean(np.exp(1j * pairs[:, 1]))
        assert abs(joint_hat - product_hat) <= ecf_threshold(len(pairs), exact_gap)

    def test_samples(self, rng, tau, profile):
        draws = sample_moving_average(tau, profile, [0.0, 1.0], 0.01, None, rng, size=3000)
        assert draws.shape == (3000, 2)
        params = moving_average_params(tau, profile)
        for k in range(2):
            assert_cf_close(draws[:, k], params, thetas=(0.5, 1.0), tolerance=0.08)

    def test_single_draw_shape(self, rng, tau, profile):
        assert sample_moving_average(tau, profile, [0.0, 0.5, 2.0], 0.05, None, rng).shape == (3,)

    def test_times_must_increase(self, rng, tau, profile):
        with pytest.raises(DomainError):
            sample_moving_average(tau, profile, [1.0, 0.0], 0.05, None, rng)

    def test_short_kernel_window(self, rng, tau, profile):
        with pytest.raises(TruncationBudgetError):
            sample_moving_average(tau, profile, [0.0], 0.05, 0.01, rng)

    def test_auto_r_max(self, tau, profile):
        r_max = auto_r_max(tau, profile, 1e-4)
        assert kernel_tail_fraction(tau, profile, r_max) <= 1e-4
        assert kernel_tail_fraction(tau, profile, 0.5 * r_max) > 1e-4


class TestSubstitution:

    def test_shared_points_agree(self, rng, tau, profile):
        buffer = sample_poisson_points('psi', (-5.0, 0.0), 0.05, rng, profile)
        result = levysub_check(buffer, tau, profile)
        assert result.points == len(buffer)
        assert result.jump_difference <= 1e-9
        assert result.max_point_difference <= 1e-12
        assert result.kept_left == result.points
        assert result.kept_right <= result.kept_left
        assert result.intensity_z < 4.5

    def test_counts_follow_the_sampling_intensity(self, rng, profile):
        # points drawn at alpha 1.5 but judged against the alpha 1.3 intensities
        buffer = sample_poisson_points('psi', (-150.0, 0.0), 0.05, rng, profile)
        assert levysub_check(buffer, FunctionalSpec.parse('tau', 1.5), profile).intensity_z < 4.5
        other = LimitProfile(1.3)
        assert levysub_check(buffer, FunctionalSpec.parse('tau', 1.3), other).intensity_z > 4.5

    def test_eps_below_buffer(self, rng, tau, profile):
        buffer = sample_poisson_points('psi', (-1.0, 0.0), 0.1, rng, profile)
        with pytest.raises(DomainError):
            levysub_check(buffer, tau, profile, eps=0.05)

    def test_codifference_of_independent_samples(self, rng):
        params = StableParams(1.5, 0.5, 0.0)
        x = sample_stable(params, rng, 20_000)
        y = sample_stable(params, rng, 20_000)
        assert abs(codifference(x, y)) < 0.05
        assert codifference(x, x) > 0.1
        with pytest.raises(DimensionMismatch):
            codifference(x, y[:10])
