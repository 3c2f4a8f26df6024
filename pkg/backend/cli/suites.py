"""
Packaged verification suites

`smoke` runs small, fast versions of the checks; `acceptance` runs the
full-size experiments.  Every check gets its own master seed derived from
the run seed and its position, so checks can be reordered or skipped
without changing the others.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy import integrate
from scipy.special import betaln

from cli.commands import (
    STATIC_VALUE_COLUMNS,
    CommandResult,
    OutputWriter,
    evolve_replicate,
    limit_params,
    static_replicate,
    theta_vectors,
    _build_log,
)
from cli.models import ExperimentConfig
from services.chain import hitting_index, sample_block_path
from services.evolving import extract_tree
from services.funcspec import FunctionalSpec, LimitProfile
from services.rates import RatesContext, get_rates_context
from services.replicate_farm import ReplicateFarm
from services.stable_limits import (
    PointKind,
    StableParams,
    cf_stable,
    joint_cf_moving_average,
    levysub_check,
    moving_average_params,
    sample_I,
    sample_moving_average,
    sample_poisson_points,
    sample_truncation_residual,
)
from services.verify import (
    SampleSet,
    TestReport,
    _report,
    ecf,
    ecf_distance,
    ecf_threshold,
    frequency_report,
    ks_against_stable,
    ks_two_sample,
    trend_report,
)
from utils.rng import derive_seed, stream_rng

logger = logging.getLogger(__name__)

EXAMPLE_ALPHA = 1.5


@dataclass(frozen=True)
class SuiteScale:
    """Sizes of one suite; acceptance values follow the published protocol"""

    oracle_alphas: Tuple[float, ...]
    oracle_b_max: int
    brute_force_chains: int
    cross_n: int
    cross_replicates: int
    example_n: int
    example_replicates: int
    example_ladder: Tuple[int, ...]
    ladder_replicates: int
    reference_size: int
    block_count_n: int
    block_count_replicates: int
    hitting_n: int
    hitting_replicates: int
    levysub_buffers: int
    levysub_points: int
    limit_draws: int
    series_n: int
    series_replicates: int
    series_ladder: Tuple[int, ...]
    residual_draws: int
    model_slack: float = 1.0


SCALES = {
    'smoke': SuiteScale(
        oracle_alphas=(1.5,), oracle_b_max=30, brute_force_chains=10_000,
        cross_n=100, cross_replicates=200,
        example_n=100, example_replicates=200, example_ladder=(50, 100, 200), ladder_replicates=200,
        reference_size=20_000,
        block_count_n=1000, block_count_replicates=20,
        hitting_n=1000, hitting_replicates=50,
        levysub_buffers=20, levysub_points=2000,
        limit_draws=5000,
        series_n=100, series_replicates=100, series_ladder=(50, 100, 200),
        residual_draws=20_000,
        model_slack=5.0,
    ),
    'acceptance': SuiteScale(
        oracle_alphas=(1.1, 1.3, 1.5, 1.7, 1.9), oracle_b_max=200, brute_force_chains=1_000_000,
        cross_n=100, cross_replicates=5000,
        example_n=10_000, example_replicates=2000, example_ladder=(1000, 10_000, 100_000), ladder_replicates=2000,
        reference_size=100_000,
        block_count_n=100_000, block_count_replicates=200,
        hitting_n=100_000, hitting_replicates=200,
        levysub_buffers=200, levysub_points=10_000,
        limit_draws=100_000,
        series_n=10_000, series_replicates=2000, series_ladder=(1000, 3000, 10_000),
        residual_draws=100_000,
    ),
}


class SuiteRun:
    """Per-check seeding and worker settings shared by all checks of a suite"""

    def __init__(self, exp: ExperimentConfig, scale: SuiteScale):
        self.exp = exp
        self.scale = scale

    def farm(self, check: int) -> ReplicateFarm:
        return ReplicateFarm(derive_seed(self.exp.seed, check), self.exp.workers, self.exp.chunk_size)

    def rng(self, check: int, tag: int = 0) -> np.random.Generator:
        return stream_rng(self.exp.seed, check, tag)

    def tolerance(self, value: float) -> float:
        """Model tolerance widened for reduced-size suites"""
        return value * self.scale.model_slack

    @property
    def trend_slack(self) -> float:
        return self.exp.trend_slack * self.scale.model_slack


# ----------------------------------------------------------------------
# Replicate tasks
# ----------------------------------------------------------------------

def chain_tau_task(rng: np.random.Generator, alpha: float, n: int, i_max: int) -> int:
    return sample_block_path(get_rates_context(alpha, i_max), n, rng).tau


def chain_blocks_task(rng: np.random.Generator, alpha: float, n: int, i_max: int) -> Tuple[int, ...]:
    return tuple(int(b) for b in sample_block_path(get_rates_context(alpha, i_max), n, rng).blocks)


def evolving_tau_task(rng: np.random.Generator, alpha: float, n: int, i_max: int) -> int:
    log = _build_log(rng, alpha, n, i_max, None, 1e4)
    return extract_tree(log, 0.0).path.tau


def block_count_task(rng: np.random.Generator, alpha: float, n: int, depths: Tuple[float, ...], i_max: int) -> List[int]:
    """Lineage counts N_n at scaled reverse depths, from a partial extraction"""
    log = _build_log(rng, alpha, n, i_max, None, 1e4)
    factor = n ** (1.0 - alpha)
    trace = extract_tree(log, 0.0, max_depth=max(depths) * factor)
    return [trace.block_count_at(r * factor) for r in depths]


def hitting_task(rng: np.random.Generator, alpha: float, n: int, levels: Tuple[float, ...], i_max: int) -> List[int]:
    path = sample_block_path(get_rates_context(alpha, i_max), n, rng)
    return [hitting_index(path, a) for a in levels]


# ----------------------------------------------------------------------
# Checks
# ----------------------------------------------------------------------

def rate_by_quadrature(alpha: float, b: int, k: int) -> float:
    """int_0^1 p^(k-2) (1-p)^(b-k) Lambda(dp) with the Beta density folded into the weight"""
    value, _ = integrate.quad(
        lambda p: 1.0, 0.0, 1.0, weight='alg', wvar=(k - 1.0 - alpha, b - k + alpha - 1.0),
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return value * math.exp(-betaln(2.0 - alpha, alpha))


def check_rate_oracle(run: SuiteRun, check: int) -> List[TestReport]:
    worst = 0.0
    for alpha in run.scale.oracle_alphas:
        ctx = RatesContext(alpha, i_max=run.exp.i_max)
        for b in range(2, run.scale.oracle_b_max + 1):
            for k in range(2, b + 1):
                exact = ctx.merger_rate(b, k)
                worst = max(worst, abs(exact - rate_by_quadrature(alpha, b, k)) / exact)
    meta = {'alphas': list(run.scale.oracle_alphas), 'b_max': run.scale.oracle_b_max}
    return [_report('rate_oracle', worst, 1e-9, [run.scale.oracle_b_max], meta)]


def path_probabilities(ctx: RatesContext, n: int) -> Dict[Tuple[int, ...], float]:
    """Exact law of the block-count sequence from n down to 1"""
    if n == 1:
        return {(1,): 1.0}
    out = {}
    pmf = ctx.merger_size_pmf(n)
    for i, p in enumerate(pmf, start=1):
        for tail, q in path_probabilities(ctx, n - i).items():
            out[(n,) + tail] = p * q
    return out


def check_small_n(run: SuiteRun, check: int) -> List[TestReport]:
    reports = []
    ctx = get_rates_context(EXAMPLE_ALPHA, run.exp.i_max)
    for offset, n in enumerate((3, 4)):
        exact = path_probabilities(ctx, n)
        paths = run.farm(check * 10 + offset).run(chain_blocks_task, run.scale.brute_force_chains, EXAMPLE_ALPHA, n, run.exp.i_max)
        keys = sorted(exact)
        tally = Counter(paths)
        counts = [tally[key] for key in keys]
        reports.append(frequency_report(counts, [exact[k] for k in keys], z=3.0, name=f'path_frequencies_n{n}'))
    return reports


def check_cross_sampler(run: SuiteRun, check: int) -> List[TestReport]:
    s = run.scale
    chain = run.farm(check * 10).run_array(chain_tau_task, s.cross_replicates, EXAMPLE_ALPHA, s.cross_n, run.exp.i_max)
    evolving = run.farm(check * 10 + 1).run_array(evolving_tau_task, s.cross_replicates, EXAMPLE_ALPHA, s.cross_n, run.exp.i_max)
    return [ks_two_sample(
        SampleSet(chain, {'sampler': 'chain', 'n': s.cross_n}),
        SampleSet(evolving, {'sampler': 'evolving', 'n': s.cross_n}),
        significance=1e-3, name='tau_chain_vs_evolving',
    )]


def _static_sample(run: SuiteRun, check: int, n: int, replicates: int) -> np.ndarray:
    rows = run.farm(check).run(static_replicate, replicates, EXAMPLE_ALPHA, n, ('tau',), run.exp.i_max)
    return np.asarray(rows)


def _example_reports(run: SuiteRun, column: str, values: np.ndarray, params: StableParams,
                     tag: int, max_ks: float, max_cf: float) -> List[TestReport]:
    sample = SampleSet(values, {'column': column, 'n': run.scale.example_n})
    ks = ks_against_stable(sample, params, run.rng(tag), run.scale.reference_size, max_statistic=run.tolerance(max_ks))
    cf = ecf_distance(sample, lambda th: cf_stable(params, th), [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0],
                      threshold=run.tolerance(max_cf), name=f'ecf_{column}')
    return [ks, cf]


def check_examples(run: SuiteRun, check: int) -> List[TestReport]:
    """Worked examples: tau_n, total length, external length and their ratio"""
    s = run.scale
    exp = ExperimentConfig(alpha=EXAMPLE_ALPHA)
    table = _static_sample(run, check, s.example_n, s.example_replicates)
    col = {name: table[:, i] for i, name in enumerate(STATIC_VALUE_COLUMNS)}
    reports = []
    for tag, (column, max_ks) in enumerate([
        ('scaled_tau', 0.08),
        ('scaled_total_length', 0.08),
        ('scaled_external_length', 0.08),
        ('scaled_length_ratio', 0.10),
    ]):
        reports.extend(_example_reports(run, column, col[column], limit_params(column, exp), check * 10 + tag, max_ks, 0.05))

    # tau_n ladder: the KS distance should not grow with n
    ks_values = []
    for offset, n in enumerate(s.example_ladder):
        values = _static_sample(run, check * 100 + offset, n, s.ladder_replicates)[:, STATIC_VALUE_COLUMNS.index('scaled_tau')]
        sample = SampleSet(values, {'column': 'scaled_tau', 'n': n})
        ks_values.append(ks_against_stable(sample, limit_params('scaled_tau', exp), run.rng(check, 50 + offset),
                                           s.reference_size, max_statistic=1.0).statistic)
    reports.append(trend_report(s.example_ladder, ks_values, run.trend_slack, name='trend_scaled_tau'))

    # x^(1-alpha) leaves the admissible class once alpha passes the golden ratio
    try:
        ExperimentConfig(alpha=1.7, functionals=['length'])
        rejected = 0.0
    except ValidationError:
        rejected = 1.0
    reports.append(_report('length_rejected_at_alpha_1.7', rejected, 1.0, [], {}, orientation='ge'))

    a = EXAMPLE_ALPHA
    n = s.example_n
    scale = a * (a - 1.0) * math.gamma(a) * n ** (2.0 - a)
    ext_ratio = float(np.mean(col['ell'])) / scale
    reports.append(_report('mean_external_length_ratio', abs(ext_ratio - 1.0), run.tolerance(0.03), [len(table)], {'ratio': ext_ratio}))
    length_ratio = float(np.mean(col['ell'] / col['L']))
    reports.append(_report('mean_external_to_total', abs(length_ratio - (2.0 - a)), run.tolerance(0.02), [len(table)], {'mean': length_ratio}))
    return reports


def check_block_counts(run: SuiteRun, check: int) -> List[TestReport]:
    s = run.scale
    depths = (0.5, 1.0, 2.0, 5.0)
    profile = LimitProfile(EXAMPLE_ALPHA)
    counts = np.asarray(run.farm(check).run(block_count_task, s.block_count_replicates, EXAMPLE_ALPHA,
                                            s.block_count_n, depths, run.exp.i_max), dtype=np.float64)
    target = np.asarray([profile.m(r) for r in depths]) * s.block_count_n
    inside = np.abs(counts / target - 1.0) <= 0.05
    fractions = inside.mean(axis=0)
    meta = {'depths': list(depths), 'fractions': fractions.tolist(), 'target': target.tolist()}
    return [_report('block_counts_near_m', float(fractions.min()), 0.95, [len(counts)], meta, orientation='ge')]


def check_hitting(run: SuiteRun, check: int) -> List[TestReport]:
    s = run.scale
    levels = (0.25, 0.5, 0.75)
    hits = np.asarray(run.farm(check).run(hitting_task, s.hitting_replicates, EXAMPLE_ALPHA, s.hitting_n,
                                          levels, run.exp.i_max), dtype=np.float64)
    means = hits.mean(axis=0) / s.hitting_n
    expected = np.asarray([(1.0 - a) * (EXAMPLE_ALPHA - 1.0) for a in levels])
    meta = {'levels': list(levels), 'means': means.tolist(), 'expected': expected.tolist()}
    return [_report('hitting_index_mean', float(np.max(np.abs(means - expected))), 0.01, [len(hits)], meta)]


def check_levysub(run: SuiteRun, check: int) -> List[TestReport]:
    s = run.scale
    profile = LimitProfile(EXAMPLE_ALPHA)
    f = FunctionalSpec.parse('tau', EXAMPLE_ALPHA)
    levels = (0.1, 0.05, 0.025)
    a = EXAMPLE_ALPHA
    # window length giving the requested expected point count at the finest level
    horizon = s.levysub_points * a / (profile.levy_constant * levels[-1] ** (-a))
    rng = run.rng(check)
    worst_jump = 0.0
    differences = {eps: [] for eps in levels}
    kept, expected = np.zeros(2), np.zeros(2)
    for _ in range(s.levysub_buffers):
        buffer = sample_poisson_points(PointKind.PSI, (-horizon, 0.0), levels[-1], rng, profile)
        for eps in levels:
            result = levysub_check(buffer.restrict(eps), f, profile)
            worst_jump = max(worst_jump, result.jump_difference)
            differences[eps].append(result.compensated_difference)
            if eps == levels[-1]:
                kept += (result.kept_left, result.kept_right)
                expected += (result.meta['expected_left'], result.meta['expected_right'])
    rms = [float(np.sqrt(np.mean(np.square(differences[eps])))) for eps in levels]
    reports = [_report('levysub_jump_difference', worst_jump, 1e-9, [s.levysub_buffers], {'horizon': horizon})]
    # pooled Poisson z-score of the counts kept by the kernel and the mapped sides
    z = np.abs(kept - expected) / np.sqrt(expected)
    reports.append(_report('levysub_intensity', float(np.max(z)), 4.0, [s.levysub_buffers],
                           {'kept': kept.tolist(), 'expected': expected.tolist()}))
    reports.append(trend_report([int(round(1.0 / eps)) for eps in levels], rms, run.trend_slack, name='levysub_compensator_trend'))
    return reports


def check_limit_objects(run: SuiteRun, check: int) -> List[TestReport]:
    s = run.scale
    a = EXAMPLE_ALPHA
    profile = LimitProfile(a)
    reports = []
    for tag, text in enumerate(('tau', 'length', 'extlength')):
        f = FunctionalSpec.parse(text, a)
        sigma, beta = f.sigma_beta()
        params = StableParams(a, sigma, beta)
        draws = sample_I(f, 0.01, run.rng(check, tag), profile, size=s.limit_draws, gaussian_residual=True)
        reports.append(ecf_distance(SampleSet(draws, {'functional': text}), lambda th: cf_stable(params, th),
                                    [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0], threshold=run.tolerance(0.02), name=f'sample_I_cf_{text}'))

    f = FunctionalSpec.parse('tau', a)
    lag = 50.0
    pairs = sample_moving_average(f, profile, [0.0, lag], 0.005, None, run.rng(check, 10), size=s.limit_draws)
    marginal = pairs[:, 0]
    reports.append(ecf_distance(
        SampleSet(marginal, {'functional': 'tau', 'eps': 0.005}),
        lambda th: joint_cf_moving_average(f, profile, [0.0], [th]),
        [-1.0, -0.5, 0.5, 1.0], threshold=run.tolerance(0.02), name='moving_average_marginal_cf',
    ))

    single = joint_cf_moving_average(f, profile, [0.0], [1.0])
    lags = (5, 25, 125)
    gaps = [abs(joint_cf_moving_average(f, profile, [0.0, float(h)], [1.0, 1.0]) - single * single) for h in lags]
    reports.append(trend_report(lags, gaps, 1.0, name='moving_average_factorization_decay'))

    # sampled pair against its sampled marginals, with the analytic gap as tolerance
    exact_gap = abs(joint_cf_moving_average(f, profile, [0.0, lag], [1.0, 1.0]) - single * single)
    joint_hat = np.mean(np.exp(1j * (pairs[:, 0] + pairs[:, 1])))
    product_hat = np.mean(np.exp(1j * pairs[:, 0])) * np.mean(np.exp(1j * pairs[:, 1]))
    reports.append(_report(
        'moving_average_factorization_lag50', float(abs(joint_hat - product_hat)),
        ecf_threshold(len(pairs), exact_gap), [len(pairs)], {'lag': lag, 'exact_gap': exact_gap},
    ))

    params = moving_average_params(f, profile)
    direct = cf_stable(params, 1.0)
    reports.append(_report('moving_average_cf_paths_agree', abs(direct - single), 1e-8, [], {}))
    return reports


def check_series(run: SuiteRun, check: int) -> List[TestReport]:
    """Joint law of (J_n,0, J_n,1) against the moving average, and its trend in n"""
    s = run.scale
    a = EXAMPLE_ALPHA
    profile = LimitProfile(a)
    f = FunctionalSpec.parse('tau', a)
    times = (0.0, 1.0)
    theta = theta_vectors(2, [])
    distances = []
    reports = []
    for offset, n in enumerate(s.series_ladder):
        rows = run.farm(check * 10 + offset).run(
            evolve_replicate, s.series_replicates, a, n, ('tau',), times, run.exp.i_max, None, 1e4,
        )
        values = np.asarray([[row[3] for row in pair] for pair in rows])
        report = ecf_distance(
            SampleSet(values, {'n': n}),
            lambda th: joint_cf_moving_average(f, profile, times, th),
            theta, threshold=run.tolerance(0.1), name=f'series_joint_cf_n{n}',
        )
        distances.append(report.statistic)
        if n == s.series_n:
            reports.append(report)
    reports.append(trend_report(s.series_ladder, distances, run.trend_slack, name='trend_series_joint_cf'))
    return reports


def check_truncation_law(run: SuiteRun, check: int) -> List[TestReport]:
    s = run.scale
    reports = []
    for tag, eps in enumerate((0.2, 0.1)):
        draws = sample_truncation_residual(1.0, EXAMPLE_ALPHA, eps, run.rng(check, tag), s.residual_draws)
        expected = eps ** (2.0 - EXAMPLE_ALPHA) / (2.0 - EXAMPLE_ALPHA)
        ratio = float(np.var(draws)) / expected
        reports.append(_report(f'truncation_variance_eps{eps}', abs(ratio - 1.0), 0.1, [s.residual_draws], {'ratio': ratio}))
    return reports


def check_identities(run: SuiteRun, check: int) -> List[TestReport]:
    """Checks whose outcome follows from definitions"""
    values = run.rng(check).standard_normal(200)
    same = SampleSet(values)
    reports = [ks_two_sample(same, same, name='ks_identical_samples')]
    one = abs(ecf(same, [0.0])[0] - 1.0)
    reports.append(_report('ecf_at_zero', float(one), 1e-12, [same.size], {}))
    f = FunctionalSpec.parse('tau', EXAMPLE_ALPHA)
    unit = joint_cf_moving_average(f, LimitProfile(EXAMPLE_ALPHA), [0.0, 1.0], [0.0, 0.0])
    reports.append(_report('joint_cf_at_zero', abs(unit - 1.0), 1e-12, [], {}))
    reports.append(trend_report([1, 2, 3], [0.5, 0.5, 0.5], name='trend_constant'))
    return reports


CHECKS: Dict[str, List[Tuple[str, Callable[[SuiteRun, int], List[TestReport]]]]] = {
    'smoke': [
        ('identities', check_identities),
        ('rate_oracle', check_rate_oracle),
        ('small_n', check_small_n),
        ('cross_sampler', check_cross_sampler),
        ('examples', check_examples),
        ('levysub', check_levysub),
        ('limit_objects', check_limit_objects),
        ('series', check_series),
        ('truncation_law', check_truncation_law),
    ],
    'acceptance': [
        ('rate_oracle', check_rate_oracle),
        ('small_n', check_small_n),
        ('cross_sampler', check_cross_sampler),
        ('examples', check_examples),
        ('block_counts', check_block_counts),
        ('hitting', check_hitting),
        ('levysub', check_levysub),
        ('limit_objects', check_limit_objects),
        ('series', check_series),
        ('truncation_law', check_truncation_law),
    ],
}


def run_suite(exp: ExperimentConfig, writer: OutputWriter, name: str, only: Sequence[str] = ()) -> CommandResult:
    run = SuiteRun(exp, SCALES[name])
    reports = []
    for check, (label, fn) in enumerate(CHECKS[name], start=1):
        if only and label not in only:
            continue
        logger.info("suite %s: running %s", name, label)
        produced = fn(run, check)
        reports.extend(produced)
        passed = sum(r.passed for r in produced)
        writer.result.lines.append(f"{label}: {passed}/{len(produced)} passed")
    writer.reports(reports)
    return writer.result
