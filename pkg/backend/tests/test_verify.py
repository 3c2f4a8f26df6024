"""Statistical comparisons and their reports"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from errors import DimensionMismatch, DomainError
from services.stable_limits import StableParams, cf_stable, sample_stable
from services.verify import (
    SampleSet,
    TestReport,
    chi_squared_gof,
    ecf,
    ecf_distance,
    ecf_factorization,
    ecf_threshold,
    frequency_report,
    ks_against_stable,
    ks_threshold,
    ks_two_sample,
    trend_report,
)


class TestSampleSet:

    def test_shape_checks(self):
        with pytest.raises(DimensionMismatch):
            SampleSet(np.empty(0))
        with pytest.raises(DimensionMismatch):
            SampleSet(np.zeros((2, 2, 2)))
        with pytest.raises(DomainError):
            SampleSet(np.array([1.0, np.nan]))

    def test_columns(self):
        sample = SampleSet(np.arange(6.0).reshape(3, 2), {'run': 'x'})
        assert sample.size == 3 and sample.dim == 2
        column = sample.column(1)
        np.testing.assert_array_equal(column.values, [1.0, 3.0, 5.0])
        assert column.metadata == {'run': 'x', 'column': 1}
        with pytest.raises(DimensionMismatch):
            SampleSet(np.ones(4)).column(1)


class TestReports:

    def test_pass_flag_must_agree(self):
        with pytest.raises(ValidationError):
            TestReport(test='t', statistic=0.5, threshold=0.1, passed=True)
        with pytest.raises(ValidationError):
            TestReport(test='t', statistic=0.5, threshold=0.1, passed=False, orientation='ge')

    def test_serialized_with_pass_key(self):
        report = TestReport(test='t', statistic=0.05, threshold=0.1, passed=True)
        payload = report.to_dict()
        assert payload['pass'] is True
        assert 'passed' not in payload
        assert TestReport(**payload).passed


class TestKolmogorovSmirnov:

    def test_threshold(self):
        expected = math.sqrt(-math.log(0.0005) / 2.0) * math.sqrt(2.0 / 1000)
        assert ks_threshold(1000, 1000, 1e-3) == pytest.approx(expected)

    def test_identical_samples(self, rng):
        values = rng.normal(size=500)
        report = ks_two_sample(SampleSet(values), SampleSet(values.copy()))
        assert report.statistic == 0.0
        assert report.passed
        assert report.sizes == [500, 500]

    def test_shifted_samples_fail(self, rng):
        report = ks_two_sample(SampleSet(rng.normal(size=2000)), SampleSet(rng.normal(1.0, size=2000)))
        assert not report.passed

    def test_small_samples(self):
        with pytest.raises(DomainError):
            ks_two_sample(SampleSet(np.ones(10)), SampleSet(np.ones(100)))

    def test_multivariate_samples(self):
        with pytest.raises(DimensionMismatch):
            ks_two_sample(SampleSet(np.ones((100, 2))), SampleSet(np.ones(100)))

    def test_against_stable_reference(self, rng):
        params = StableParams(1.5, 1.0, -1.0)
        sample = SampleSet(sample_stable(params, rng, 2000))
        report = ks_against_stable(sample, params, rng, reference_size=20_000)
        assert report.passed
        capped = ks_against_stable(sample, params, rng, reference_size=20_000, max_statistic=1e-6)
        assert not capped.passed
        assert capped.threshold == 1e-6


class TestCharacteristicFunctions:

    def test_ecf_at_origin(self, rng):
        sample = SampleSet(rng.normal(size=(100, 3)))
        np.testing.assert_allclose(ecf(sample, [[0.0, 0.0, 0.0]]), [1.0])

    def test_ecf_dimension(self, rng):
        with pytest.raises(DimensionMismatch):
            ecf(SampleSet(rng.normal(size=(100, 3))), [[1.0, 0.0]])

    def test_distance_to_true_cf(self, rng):
        params = StableParams(1.5, 0.7, 0.5)
        sample = SampleSet(sample_stable(params, rng, 10_000))
        report = ecf_distance(sample, lambda t: cf_stable(params, t), [0.25, 0.5, 1.0, 2.0])
        assert report.passed
        assert report.threshold == pytest.approx(ecf_threshold(10_000))
        assert len(report.meta['distances']) == 4

    def test_distance_to_wrong_cf(self, rng):
        sample = SampleSet(sample_stable(StableParams(1.5, 0.7, 0.5), rng, 10_000))
        wrong = StableParams(1.5, 2.0, 0.5)
        assert not ecf_distance(sample, lambda t: cf_stable(wrong, t), [0.5, 1.0]).passed

    def test_factorization(self, rng):
        independent = SampleSet(rng.normal(size=(20_000, 2)))
        grid = [[1.0, 1.0], [1.0, -1.0]]
        assert ecf_factorization(independent, grid, threshold=0.03).passed
        z = rng.normal(size=20_000)
        dependent = SampleSet(np.column_stack([z, z]))
        assert not ecf_factorization(dependent, grid, threshold=0.03).passed
        with pytest.raises(DimensionMismatch):
            ecf_factorization(SampleSet(z), [1.0], threshold=0.1)


class TestCountsAndTrends:

    def test_chi_squared(self, rng):
        p = np.array([0.5, 0.3, 0.15, 0.05])
        counts = np.bincount(rng.choice(4, size=5000, p=p), minlength=4)
        report = chi_squared_gof(counts, p)
        assert report.orientation == 'ge'
        assert report.passed
        assert not chi_squared_gof([2500, 0, 0, 2500], p).passed

    def test_chi_squared_pools_sparse_bins(self):
        report = chi_squared_gof([98, 1, 1], [0.98, 0.01, 0.01])
        assert report.meta['bins'] == 2

    def test_frequency_report(self):
        report = frequency_report([500, 500], [0.5, 0.5])
        assert report.statistic == 0.0 and report.passed
        assert not frequency_report([10, 0], [0.5, 0.5]).passed
        assert not frequency_report([5, 5], [1.0, 0.0]).passed

    def test_trend_report(self):
        report = trend_report([100, 1000, 10_000], [0.2, 0.1, 0.11], slack=1.2)
        assert report.passed
        assert report.statistic == pytest.approx(1.1)
        assert not trend_report([100, 1000, 10_000], [0.1, 0.2, 0.1], slack=1.2).passed

    def test_trend_needs_three_values(self):
        with pytest.raises(DomainError):
            trend_report([100, 1000], [0.2, 0.1])
        with pytest.raises(DomainError):
            trend_report([100, 100, 1000], [0.2, 0.1, 0.1])
        with pytest.raises(DimensionMismatch):
            trend_report([100, 1000, 10_000], [0.2, 0.1])
