"""Coalescent rates, merger-size laws and the rejection sampler"""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import betaln

from errors import DomainError
from services.rates import Alpha, RatesContext, get_rates_context


def quad_rate(alpha, b, k):
    value, _ = integrate.quad(
        lambda p: 1.0, 0.0, 1.0, weight='alg', wvar=(k - 1.0 - alpha, b - k + alpha - 1.0),
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return value * math.exp(-betaln(2.0 - alpha, alpha))


class TestAlpha:

    @pytest.mark.parametrize('value', [1.0, 2.0, 0.5, 2.5, float('nan')])
    def test_rejects_outside_open_interval(self, value):
        with pytest.raises(DomainError):
            Alpha(value)

    def test_float_conversion(self):
        assert float(Alpha(1.5)) == 1.5


class TestMergerRates:

    def test_pair_merger_rate_is_one(self, ctx):
        assert ctx.merger_rate(2, 2) == pytest.approx(1.0, rel=1e-14)
        assert ctx.total_rate(2) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize('alpha', [1.1, 1.5, 1.9])
    def test_matches_quadrature(self, alpha):
        rates = get_rates_context(alpha, 2000)
        for b, k in [(2, 2), (5, 3), (20, 2), (20, 20), (60, 7)]:
            assert rates.merger_rate(b, k) == pytest.approx(quad_rate(alpha, b, k), rel=1e-9)

    def test_consistency_recursion(self, ctx):
        # lambda_{b,k} = lambda_{b+1,k} + lambda_{b+1,k+1}
        for b in (3, 10, 50):
            for k in range(2, b + 1):
                lhs = ctx.merger_rate(b, k)
                rhs = ctx.merger_rate(b + 1, k) + ctx.merger_rate(b + 1, k + 1)
                assert lhs == pytest.approx(rhs, rel=1e-11)

    @pytest.mark.parametrize('b, k', [(1, 2), (5, 1), (4, 5)])
    def test_domain(self, ctx, b, k):
        with pytest.raises(DomainError):
            ctx.merger_rate(b, k)

    def test_total_rate_needs_two_blocks(self, ctx):
        with pytest.raises(DomainError):
            ctx.total_rate(1)

    def test_table_agrees_with_direct_sum(self, ctx):
        table = ctx.total_rate_table(300)
        assert table[0] == 0.0 and table[1] == 0.0
        direct = np.array([ctx.total_rate(b) for b in range(2, 301)])
        np.testing.assert_allclose(table[2:], direct, rtol=1e-10)

    def test_table_is_increasing(self, ctx):
        table = ctx.total_rate_table(1000)
        assert np.all(np.diff(table[2:]) > 0.0)

    def test_asymptotic_ratio_improves(self, ctx):
        error_small = abs(ctx.total_rate(100) / ctx.rate_asymptotic(100) - 1.0)
        error_large = abs(ctx.total_rate(10_000) / ctx.rate_asymptotic(10_000) - 1.0)
        assert error_large < error_small


class TestMergerSizeLaw:

    @pytest.mark.parametrize('j', [2, 3, 17, 500])
    def test_pmf_normalized(self, ctx, j):
        pmf = ctx.merger_size_pmf(j)
        assert len(pmf) == j - 1
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(pmf > 0.0)

    def test_pmf_entries(self, ctx):
        pmf = ctx.merger_size_pmf(6)
        total = ctx.total_rate(6)
        for i in range(1, 6):
            expected = math.comb(6, i + 1) * ctx.merger_rate(6, i + 1) / total
            assert pmf[i - 1] == pytest.approx(expected, rel=1e-12)

    def test_limit_law_sums_to_one(self, ctx):
        assert ctx.q_table.sum() + ctx.q_tail_mass == pytest.approx(1.0, abs=1e-10)
        assert ctx.limit_q_tail(0) == pytest.approx(1.0, rel=1e-12)

    def test_limit_law_mean(self):
        # mean of q is 1/(alpha-1); the tail decays like i^-alpha so use a large table
        rates = RatesContext(1.8, i_max=200_000, envelope_j_max=10)
        i = np.arange(1, rates.i_max + 1)
        partial = float(np.sum(i * rates.q_table))
        assert partial == pytest.approx(rates.gamma, rel=0.02)

    def test_pmf_approaches_limit(self, ctx):
        gaps = [abs(ctx.merger_size_pmf(j)[0] - ctx.limit_q(1)) for j in (100, 1000)]
        assert gaps[1] < gaps[0] / 5.0

    def test_stirling_form(self, ctx):
        assert ctx.limit_q(5000) == pytest.approx(ctx.limit_q_stirling(5000), rel=1e-3)

    def test_q_index_domain(self, ctx):
        with pytest.raises(DomainError):
            ctx.limit_q(0)


class TestRejectionSampler:

    def test_two_blocks_always_lose_one(self, ctx, rng):
        assert all(ctx.sample_merger_size(2, rng) == 1 for _ in range(20))

    def test_envelope_dominates(self, ctx):
        for j in (3, 50, 2000):
            ratio = ctx.merger_size_pmf(j) / ctx.q_table[: j - 1]
            assert np.max(ratio) <= ctx.envelope

    @pytest.mark.parametrize('j', [4, 12])
    def test_frequencies_match_pmf(self, ctx, rng, j):
        sampler = ctx.size_sampler(rng)
        draws = np.array([sampler.draw(j) for _ in range(40_000)])
        assert draws.min() >= 1 and draws.max() <= j - 1
        pmf = ctx.merger_size_pmf(j)
        freq = np.bincount(draws, minlength=j)[1:] / len(draws)
        se = np.sqrt(pmf * (1.0 - pmf) / len(draws))
        assert np.all(np.abs(freq - pmf) <= 4.5 * se + 1e-12)

    def test_large_j_draws_stay_in_range(self, ctx, rng):
        sampler = ctx.size_sampler(rng)
        draws = [sampler.draw(100_000) for _ in range(2000)]
        assert min(draws) >= 1 and max(draws) < 100_000

    def test_same_seed_same_draws(self, ctx):
        a = ctx.size_sampler(np.random.default_rng(7))
        b = ctx.size_sampler(np.random.default_rng(7))
        assert [a.draw(30) for _ in range(100)] == [b.draw(30) for _ in range(100)]

    def test_lemma_constant_is_finite(self, ctx):
        c = ctx.lemma_envelope_constant([50, 100, 500])
        assert 0.0 < c < math.inf
