"""
Statistical comparisons of Monte Carlo output against limit laws
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from errors import DimensionMismatch, DomainError
from services.stable_limits import StableParams, sample_stable

logger = logging.getLogger(__name__)

DEFAULT_SIGNIFICANCE = 1e-3
DEFAULT_TREND_SLACK = 1.2
MIN_KS_SIZE = 50
REFERENCE_SIZE = 100_000
ECF_CHUNK = 20_000


@dataclass
class SampleSet:
    """Replicate values (shape (N,) or (N, d)) with their provenance"""

    values: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim not in (1, 2) or values.shape[0] == 0:
            raise DimensionMismatch(f"sample values must be a nonempty (N,) or (N, d) array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("sample values must be finite")
        self.values = values

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return 1 if self.values.ndim == 1 else int(self.values.shape[1])

    def column(self, j: int) -> 'SampleSet':
        if self.values.ndim == 1:
            if j != 0:
                raise DimensionMismatch(f"univariate sample has no column {j}")
            return self
        return SampleSet(self.values[:, j], {**self.metadata, 'column': j})


class TestReport(BaseModel):
    """
    Outcome of one statistical check

    `passed` is serialized as "pass".  With orientation "le" the check passes
    when statistic <= threshold, with "ge" when statistic >= threshold.
    """

    __test__ = False
    model_config = ConfigDict(populate_by_name=True)

    test: str
    statistic: float
    threshold: float
    passed: bool = Field(alias='pass')
    orientation: Literal['le', 'ge'] = 'le'
    sizes: List[int] = Field(default_factory=list)
    meta: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode='after')
    def _pass_matches_threshold(self):
        expected = self.statistic <= self.threshold if self.orientation == 'le' else self.statistic >= self.threshold
        if bool(expected) != self.passed:
            raise ValueError(f"pass flag {self.passed} disagrees with {self.statistic} {self.orientation} {self.threshold}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(by_alias=True)


def _report(
    test: str,
    statistic: float,
    threshold: float,
    sizes: Sequence[int],
    meta: Dict[str, Any],
    orientation: str = 'le'
) -> TestReport:
    statistic = float(statistic)
    threshold = float(threshold)
    passed = statistic <= threshold if orientation == 'le' else statistic >= threshold
    report = TestReport(
        test=test, statistic=statistic, threshold=threshold, passed=passed,
        orientation=orientation, sizes=list(sizes), meta=meta,
    )
    if passed:
        logger.info("%s passed: %.6g vs threshold %.6g", test, statistic, threshold)
    else:
        logger.warning("%s FAILED: %.6g vs threshold %.6g", test, statistic, threshold)
    return report


def ks_threshold(n: int, m: int, significance: float = DEFAULT_SIGNIFICANCE) -> float:
    """Asymptotic two-sample KS critical value sqrt(-ln(sig/2)/2) sqrt((n+m)/(nm))"""
    return math.sqrt(-math.log(significance / 2.0) / 2.0) * math.sqrt((n + m) / (n * m))


def ks_two_sample(
    a: SampleSet,
    b: SampleSet,
    significance: float = DEFAULT_SIGNIFICANCE,
    slack: float = 0.0,
    name: str = 'ks_two_sample'
) -> TestReport:
    """
    Two-sample Kolmogorov-Smirnov distance

    Args:
        a, b: univariate samples with at least 50 values each
        significance: level of the asymptotic critical value
        slack: added to the critical value for finite-n bias

    Raises:
        DimensionMismatch: either sample is multivariate
    """
    if a.dim != 1 or b.dim != 1:
        raise DimensionMismatch(f"KS needs univariate samples, got dimensions {a.dim} and {b.dim}")
    if a.size < MIN_KS_SIZE or b.size < MIN_KS_SIZE:
        raise DomainError(f"KS needs at least {MIN_KS_SIZE} values per sample, got {a.size} and {b.size}")
    statistic = stats.ks_2samp(a.values, b.values).statistic
    threshold = ks_threshold(a.size, b.size, significance) + slack
    meta = {'significance': significance, 'slack': slack, 'a': a.metadata, 'b': b.metadata}
    return _report(name, statistic, threshold, [a.size, b.size], meta)


def ks_against_stable(
    sample: SampleSet,
    params: StableParams,
    rng: np.random.Generator,
    reference_size: int = REFERENCE_SIZE,
    significance: float = DEFAULT_SIGNIFICANCE,
    slack: float = 0.0,
    max_statistic: Optional[float] = None
) -> TestReport:
    """
    KS distance between a sample and a large simulated stable reference

    When max_statistic is given it replaces the asymptotic threshold.
    """
    reference = SampleSet(
        sample_stable(params, rng, size=reference_size),
        {'alpha': params.alpha, 'sigma': params.sigma, 'beta': params.beta},
    )
    report = ks_two_sample(sample, reference, significance, slack, name='ks_against_stable')
    if max_statistic is None:
        return report
    return _report('ks_against_stable', report.statistic, max_statistic, report.sizes, report.meta)


def _theta_matrix(theta_grid, dim: int) -> np.ndarray:
    theta = np.asarray(theta_grid, dtype=np.float64)
    if dim == 1 and theta.ndim == 1:
        return theta[:, None]
    theta = np.atleast_2d(theta)
    if theta.shape[1] != dim:
        raise DimensionMismatch(f"theta points have {theta.shape[1]} coordinates for a {dim}-variate sample")
    return theta


def ecf(sample: SampleSet, theta_grid) -> np.ndarray:
    """(1/N) sum_k exp(i theta . X_k) at every grid point"""
    theta = _theta_matrix(theta_grid, sample.dim)
    x = sample.values.reshape(sample.size, sample.dim)
    total = np.zeros(len(theta), dtype=np.complex128)
    for start in range(0, sample.size, ECF_CHUNK):
        phase = x[start:start + ECF_CHUNK] @ theta.T
        total += np.exp(1j * phase).sum(axis=0)
    return total / sample.size


def ecf_threshold(size: int, tolerance: float = 0.0) -> float:
    return 3.0 * math.sqrt(2.0 / size) + tolerance


def ecf_distance(
    sample: SampleSet,
    cf: Callable[[np.ndarray], complex],
    theta_grid,
    tolerance: float = 0.0,
    threshold: Optional[float] = None,
    name: str = 'ecf_distance'
) -> TestReport:
    """
    max over the grid of |ecf - cf|

    Args:
        cf: called with one grid point (scalar for univariate samples, d-vector otherwise)
        tolerance: model tolerance added to the default threshold 3 sqrt(2/N)
        threshold: explicit threshold overriding the default
    """
    theta = _theta_matrix(theta_grid, sample.dim)
    empirical = ecf(sample, theta)
    points = theta[:, 0] if sample.dim == 1 else theta
    target = np.asarray([complex(cf(p)) for p in points])
    distances = np.abs(empirical - target)
    limit = ecf_threshold(sample.size, tolerance) if threshold is None else threshold
    meta = {
        'theta': points.tolist(),
        'distances': distances.tolist(),
        'tolerance': tolerance,
        'sample': sample.metadata,
    }
    return _report(name, float(np.max(distances)), limit, [sample.size], meta)


def ecf_factorization(
    sample: SampleSet,
    theta_grid,
    threshold: float,
    name: str = 'ecf_factorization'
) -> TestReport:
    """max |ecf(theta) - prod_j ecf_j(theta_j)| over the grid, for a d-variate sample"""
    if sample.dim < 2:
        raise DimensionMismatch("factorization needs a multivariate sample")
    theta = _theta_matrix(theta_grid, sample.dim)
    joint = ecf(sample, theta)
    product = np.ones(len(theta), dtype=np.complex128)
    for j in range(sample.dim):
        product *= ecf(sample.column(j), theta[:, j])
    distances = np.abs(joint - product)
    meta = {'theta': theta.tolist(), 'distances': distances.tolist(), 'sample': sample.metadata}
    return _report(name, float(np.max(distances)), threshold, [sample.size], meta)


def chi_squared_gof(
    observed: Sequence[int],
    probabilities: Sequence[float],
    significance: float = DEFAULT_SIGNIFICANCE,
    min_expected: float = 5.0
) -> TestReport:
    """
    Pearson chi-squared goodness of fit; bins with expected count below min_expected are pooled

    The reported statistic is the p-value, passing when it is at least the significance.
    """
    observed = np.asarray(observed, dtype=np.float64)
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if observed.shape != probabilities.shape:
        raise DimensionMismatch("observed counts and probabilities differ in length")
    total = observed.sum()
    expected = probabilities / probabilities.sum() * total
    small = expected < min_expected
    if np.any(small):
        observed = np.append(observed[~small], observed[small].sum())
        expected = np.append(expected[~small], expected[small].sum())
        if expected[-1] == 0.0:
            observed, expected = observed[:-1], expected[:-1]
    result = stats.chisquare(observed, expected)
    meta = {'chi2': float(result.statistic), 'bins': int(len(observed)), 'significance': significance}
    return _report('chi_squared_gof', result.pvalue, significance, [int(total)], meta, orientation='ge')


def frequency_report(
    counts: Sequence[int],
    probabilities: Sequence[float],
    z: float = 3.0,
    name: str = 'frequency_report'
) -> TestReport:
    """Largest standardized deviation |count/N - p| / sqrt(p(1-p)/N) across outcomes"""
    counts = np.asarray(counts, dtype=np.float64)
    p = np.asarray(probabilities, dtype=np.float64)
    if counts.shape != p.shape:
        raise DimensionMismatch("counts and probabilities differ in length")
    total = counts.sum()
    se = np.sqrt(p * (1.0 - p) / total)
    deviation = np.abs(counts / total - p)
    with np.errstate(divide='ignore', invalid='ignore'):
        scores = np.where(se > 0.0, deviation / se, np.where(deviation > 0.0, np.inf, 0.0))
    meta = {'frequencies': (counts / total).tolist(), 'probabilities': p.tolist()}
    return _report(name, float(np.max(scores)), z, [int(total)], meta)


def trend_report(
    ns: Sequence[int],
    statistics: Sequence[float],
    slack: float = DEFAULT_TREND_SLACK,
    name: str = 'trend_report'
) -> TestReport:
    """
    Passes when the statistic does not grow along the n-ladder beyond the slack factor

    The reported statistic is the largest step ratio s_(k+1)/s_k.
    """
    ns = [int(v) for v in ns]
    values = np.asarray(statistics, dtype=np.float64)
    if len(ns) != len(values):
        raise DimensionMismatch("one statistic per ladder value is required")
    if len(values) < 3:
        raise DomainError(f"trend needs at least 3 ladder values, got {len(values)}")
    if np.any(np.diff(ns) <= 0):
        raise DomainError("ladder values must increase")
    ratios = []
    for prev, cur in zip(values[:-1], values[1:]):
        if prev > 0.0:
            ratios.append(cur / prev)
        else:
            ratios.append(1.0 if cur <= 0.0 else math.inf)
    meta = {'n': ns, 'values': values.tolist(), 'ratios': ratios}
    return _report(name, max(ratios), slack, ns, meta)
