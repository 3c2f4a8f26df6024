"""Block-counting chain sampler and its functionals"""

import numpy as np
import pytest

from errors import DomainError, MissingFieldError
from services.chain import (
    BlockPath,
    external_length_centering,
    external_length_expansion,
    functional_J,
    functional_external_length,
    functional_length_conditional_variance,
    functional_tau,
    functional_total_length,
    functional_total_length_mean,
    hitting_index,
    max_block_ratio,
    sample_block_path,
    scaled_length_ratio,
    scaled_tau,
    total_length_centering,
)
from services.funcspec import FunctionalSpec


@pytest.fixture
def small_path():
    return BlockPath(5, 1.5, [5, 3, 2, 1], holding_times=[0.1, 0.2, 0.3], singletons=[5, 3, 1, 0])


class TestBlockPath:

    def test_fields(self, small_path):
        assert small_path.tau == 3
        np.testing.assert_array_equal(small_path.losses, [2, 1, 1])
        assert small_path.depth == pytest.approx(0.6)

    @pytest.mark.parametrize('blocks', [[5, 3, 3, 1], [5, 3, 2], [4, 3, 2, 1]])
    def test_rejects_bad_block_sequences(self, blocks):
        with pytest.raises(DomainError):
            BlockPath(5, 1.5, blocks)

    def test_rejects_bad_singletons(self):
        with pytest.raises(DomainError):
            BlockPath(5, 1.5, [5, 3, 2, 1], singletons=[5, 3, 3, 0])

    def test_rejects_nonpositive_times(self):
        with pytest.raises(DomainError):
            BlockPath(5, 1.5, [5, 3, 2, 1], holding_times=[0.1, 0.0, 0.3])


class TestFunctionals:

    def test_lengths(self, small_path):
        assert functional_total_length(small_path) == pytest.approx(5 * 0.1 + 3 * 0.2 + 2 * 0.3)
        assert functional_external_length(small_path) == pytest.approx(5 * 0.1 + 3 * 0.2 + 1 * 0.3)

    def test_missing_fields(self):
        bare = BlockPath(5, 1.5, [5, 3, 2, 1])
        with pytest.raises(MissingFieldError):
            functional_total_length(bare)
        with pytest.raises(MissingFieldError):
            functional_external_length(bare)
        with pytest.raises(MissingFieldError):
            bare.depth

    def test_constant_functional_is_scaled_tau(self, small_path):
        f = FunctionalSpec.parse('tau', 1.5)
        assert functional_J(small_path, f) == pytest.approx(scaled_tau(small_path), rel=1e-12)
        assert scaled_tau(small_path) == pytest.approx(5 ** (-2 / 3) * (3 - 2.5))

    def test_zero_functional(self, small_path):
        assert functional_J(small_path, FunctionalSpec.parse('0', 1.5)) == 0.0

    def test_alpha_mismatch(self, small_path):
        with pytest.raises(DomainError):
            functional_J(small_path, FunctionalSpec.parse('tau', 1.4))

    def test_hitting_index(self, small_path):
        assert hitting_index(small_path, 0.5) == 2
        assert hitting_index(small_path, 1.0) == 0
        assert hitting_index(small_path, 0.2) == 3

    @pytest.mark.parametrize('a', [0.0, 1.5, 0.1])
    def test_hitting_index_domain(self, small_path, a):
        with pytest.raises(DomainError):
            hitting_index(small_path, a)

    def test_max_block_ratio(self, small_path):
        assert max_block_ratio(small_path) == pytest.approx(2.0)

    def test_centerings(self):
        # total length centering is the external one divided by 2 - alpha
        assert total_length_centering(1000, 1.5) == pytest.approx(external_length_centering(1000, 1.5) / 0.5)

    def test_expansion_reduces_to_centering(self):
        # with tau_n = (alpha - 1) n the two-term expansion is the centering itself
        n = 1000
        path = BlockPath(n, 1.5, np.arange(n, 0, -2).tolist() + [1])
        assert path.tau == n // 2
        assert external_length_expansion(path) == pytest.approx(external_length_centering(n, 1.5), rel=1e-12)


class TestSampler:

    def test_path_shape(self, ctx, rng):
        path = sample_block_path(ctx, 200, rng, with_times=True, with_singletons=True)
        assert path.blocks[0] == 200 and path.blocks[-1] == 1
        assert np.all(np.diff(path.blocks) < 0)
        assert len(path.holding_times) == path.tau
        assert path.singletons[-1] == 0
        assert functional_tau(path) == path.tau

    def test_extra_fields_keep_the_jump_chain(self, ctx):
        plain = sample_block_path(ctx, 300, np.random.default_rng(11))
        full = sample_block_path(ctx, 300, np.random.default_rng(11), with_times=True, with_singletons=True)
        np.testing.assert_array_equal(plain.blocks, full.blocks)

    def test_small_n(self, ctx, rng):
        path = sample_block_path(ctx, 2, rng, with_times=True)
        np.testing.assert_array_equal(path.blocks, [2, 1])

    def test_n_domain(self, ctx, rng):
        with pytest.raises(DomainError):
            sample_block_path(ctx, 1, rng)

    def test_external_within_total(self, ctx, rng):
        for _ in range(20):
            path = sample_block_path(ctx, 150, rng, with_times=True, with_singletons=True)
            assert functional_external_length(path) <= functional_total_length(path) + 1e-12

    def test_J_is_linear(self, ctx, rng):
        f1 = FunctionalSpec.parse('x^-0.3', 1.5)
        f2 = FunctionalSpec.parse('x^2 - 1', 1.5)
        combo = 2.5 * f1 - 0.75 * f2
        for _ in range(10):
            path = sample_block_path(ctx, 500, rng)
            expected = 2.5 * functional_J(path, f1) - 0.75 * functional_J(path, f2)
            assert functional_J(path, combo) == pytest.approx(expected, abs=1e-10)

    def test_mean_length_given_chain(self, ctx, rng):
        path = sample_block_path(ctx, 100, rng)
        rates = ctx.total_rate_table(100)
        expected = sum(x / rates[x] for x in path.blocks[:-1])
        assert functional_total_length_mean(path, ctx) == pytest.approx(expected)
        assert functional_length_conditional_variance(path, ctx) > 0.0

    @pytest.mark.slow
    def test_merger_count_law_of_large_numbers(self, ctx, rng):
        n = 5000
        ratios = [sample_block_path(ctx, n, rng).tau / n for _ in range(40)]
        assert np.mean(ratios) == pytest.approx(0.5, abs=0.03)

    @pytest.mark.slow
    def test_riemann_sums(self, ctx, rng):
        n = 5000
        f = FunctionalSpec.parse('x^-0.5', 1.5)
        sums = []
        for _ in range(20):
            path = sample_block_path(ctx, n, rng)
            sums.append(np.sum(f(path.blocks[:-1] / n)) / (0.5 * n))
        assert np.mean(sums) == pytest.approx(f.integral(), rel=0.05)

    @pytest.mark.slow
    def test_length_ratio_is_centered_near_two_minus_alpha(self, ctx, rng):
        n = 2000
        values = []
        for _ in range(100):
            path = sample_block_path(ctx, n, rng, with_times=True, with_singletons=True)
            values.append(functional_external_length(path) / functional_total_length(path))
        assert np.mean(values) == pytest.approx(0.5, abs=0.06)
        # the scaled ratio is finite for every sampled path
        assert np.isfinite(scaled_length_ratio(path))
