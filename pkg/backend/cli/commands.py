"""
Handlers behind the ebcl subcommands

Each handler takes a resolved ExperimentConfig and an OutputWriter (the
single owner of the output directory) and returns a CommandResult.
Replicate work goes through module-level task functions so it can be
shipped to worker processes.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cli.models import TOOL_VERSION, ExperimentConfig
from errors import DomainError, MissingFieldError
from services.chain import (
    functional_J,
    functional_external_length,
    functional_total_length,
    functional_total_length_mean,
    functional_total_length_power,
    sample_block_path,
    scaled_external_length,
    scaled_length_ratio,
    scaled_tau,
    scaled_total_length,
)
from services.event_log_io import read_event_log, write_event_log
from services.evolving import EventLog, GenealogyTrace, extract_tree
from services.funcspec import FunctionalSpec, LimitProfile, example_sigmas
from services.plots import plot_qq, plot_series_paths
from services.rates import get_rates_context
from services.replicate_farm import ReplicateFarm
from services.stable_limits import (
    StableParams,
    auto_eps,
    auto_r_max,
    cf_stable,
    joint_cf_moving_average,
    sample_moving_average,
    sample_stable,
)
from services.verify import SampleSet, TestReport, ecf_distance, ks_against_stable, ks_two_sample, trend_report
from utils.file_ops import file_ops
from utils.rng import derive_seed, stream_rng

logger = logging.getLogger(__name__)

# spawn key for verification draws; replicate streams use one-element keys
VERIFY_KEY = (0x7FFFFFFF, 1)
RATE_TABLE_B_MAX = 200
EVOLVE_CF_THRESHOLD = 0.1
LIMIT_CF_TOLERANCE = 0.02

# spawn key of the per-rung master seeds of an n-ladder
LADDER_KEY = (0x7FFFFFFF, 2)

STATIC_BASE_COLUMNS = {
    'replicate': 'replicate index within its n',
    'seed': 'replicate seed; sample_block_path(ctx, n, default_rng(seed), True, True) rebuilds the row',
    'n': 'sample size n',
    'alpha': 'coalescent parameter alpha',
    'tau': 'number of mergers tau_n',
    'L': 'total branch length L_n',
    'Lprime': "L_n' = sum_k X_k / lambda_(X_k), total length with mean holding times",
    'L2prime': "L_n'' = alpha Gamma(alpha) sum_k X_k^(1-alpha)",
    'ell': 'external branch length l_n',
    'scaled_tau': 'n^(-1/alpha) (tau_n - (alpha-1) n)',
    'scaled_total_length': 'n^(alpha-1-1/alpha) (L_n - alpha(alpha-1)Gamma(alpha) n^(2-alpha)/(2-alpha))',
    'scaled_external_length': 'n^(alpha-1-1/alpha) (l_n - alpha(alpha-1)Gamma(alpha) n^(2-alpha))',
    'scaled_length_ratio': 'n^(1-1/alpha) (l_n/L_n - (2-alpha))',
}
# columns filled by static_replicate, in row order
STATIC_VALUE_COLUMNS = list(STATIC_BASE_COLUMNS)[4:]


@dataclass
class CommandResult:
    command: str
    artifacts: List[Path] = field(default_factory=list)
    reports: List[TestReport] = field(default_factory=list)
    lines: List[str] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.reports)


class OutputWriter:
    """
    Writes tables and JSON documents into one output directory

    Every file carries the config hash and tool version; CSV tables get a
    leading comment line and their columns are described in schema.json.
    """

    def __init__(self, out_dir, exp: ExperimentConfig, result: CommandResult):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.exp = exp
        self.result = result
        self.schema: Dict[str, Dict[str, str]] = {}

    def _record(self, path: Path) -> Path:
        self.result.artifacts.append(path)
        return path

    def table(self, name: str, frame: pd.DataFrame, columns: Dict[str, str]) -> Path:
        prov = self.exp.provenance()
        if self.exp.format == 'csv':
            path = self.out_dir / f"{name}.csv"
            header = f"# config_hash={prov['config_hash']} tool_version={prov['tool_version']} seed={prov['seed']}\n"
            body = frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')
            file_ops.atomic_write_text(path, header + body)
            self.schema[path.name] = {col: columns.get(col, '') for col in frame.columns}
        else:
            path = self.out_dir / f"{name}.json"
            payload = {
                'provenance': prov,
                'columns': list(frame.columns),
                'records': frame.to_dict(orient='list'),
            }
            file_ops.write_json(path, payload)
        return self._record(path)

    def document(self, name: str, payload: Dict[str, Any], provenance: bool = True) -> Path:
        path = self.out_dir / f"{name}.json"
        body = {'provenance': self.exp.provenance(), **payload} if provenance else payload
        file_ops.write_json(path, body)
        return self._record(path)

    def reports(self, reports: Sequence[TestReport]) -> Optional[Path]:
        if not reports:
            return None
        self.result.reports.extend(reports)
        return self.document('reports', {'reports': [r.to_dict() for r in reports]})

    def figure(self, path: Path) -> Path:
        return self._record(path)

    def finish(self):
        if self.schema:
            self.document('schema', {'files': self.schema})


# ----------------------------------------------------------------------
# Limit laws of the scaled functionals
# ----------------------------------------------------------------------

@lru_cache(maxsize=64)
def _specs(texts: Tuple[str, ...], alpha: float) -> Tuple[FunctionalSpec, ...]:
    return tuple(FunctionalSpec.parse(t, alpha) for t in texts)


def j_column(text: str) -> str:
    return f"J:{text}"


def limit_params(column: str, exp: ExperimentConfig) -> Optional[StableParams]:
    """Stable limit of a static-run column, or None when it has none (or it is degenerate)"""
    a = exp.alpha
    sig = example_sigmas(a)
    fixed = {
        'scaled_tau': ('sigma1', -1.0),
        'scaled_total_length': ('sigma2', -1.0),
        'scaled_external_length': ('sigma3', -1.0),
        'scaled_length_ratio': ('sigma4', 1.0),
    }
    if column in fixed:
        key, beta = fixed[column]
        return None if math.isnan(sig[key]) else StableParams(a, sig[key], beta)
    if column.startswith('J:'):
        sigma, beta = FunctionalSpec.parse(column[2:], a).sigma_beta()
        # J_n(f) converges to -I(f)
        return StableParams(a, sigma, -beta) if sigma > 0.0 else None
    return None


def _verify_rng(exp: ExperimentConfig, tag: int) -> np.random.Generator:
    return stream_rng(exp.seed, *VERIFY_KEY, tag)


def check_against_limit(
    sample: SampleSet,
    params: StableParams,
    exp: ExperimentConfig,
    tag: int,
    max_statistic: Optional[float] = None,
    cf_tolerance: float = 0.0
) -> List[TestReport]:
    rng = _verify_rng(exp, tag)
    ks = ks_against_stable(sample, params, rng, exp.reference_size, exp.significance, max_statistic=max_statistic)
    cf = ecf_distance(sample, lambda th: cf_stable(params, th), exp.theta_grid, tolerance=cf_tolerance)
    return [ks, cf]


# ----------------------------------------------------------------------
# Replicate tasks (module level so they pickle)
# ----------------------------------------------------------------------

def static_replicate(rng: np.random.Generator, alpha: float, n: int, texts: Tuple[str, ...], i_max: int) -> List[float]:
    ctx = get_rates_context(alpha, i_max)
    path = sample_block_path(ctx, n, rng, with_times=True, with_singletons=True)
    row = [
        float(path.tau),
        functional_total_length(path),
        functional_total_length_mean(path, ctx),
        functional_total_length_power(path),
        functional_external_length(path),
        scaled_tau(path),
        scaled_total_length(path),
        scaled_external_length(path),
        scaled_length_ratio(path),
    ]
    row.extend(functional_J(path, f) for f in _specs(texts, alpha))
    return row


def _log_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 63 - 1))


def _build_log(rng: np.random.Generator, alpha: float, n: int, i_max: int,
               block_length: Optional[float], depth_cap_factor: float) -> EventLog:
    ctx = get_rates_context(alpha, i_max)
    return EventLog(ctx, n, _log_seed(rng), block_length=block_length, depth_cap_factor=depth_cap_factor)


def evolve_replicate(
    rng: np.random.Generator,
    alpha: float,
    n: int,
    texts: Tuple[str, ...],
    times: Tuple[float, ...],
    i_max: int,
    block_length: Optional[float],
    depth_cap_factor: float
) -> List[List[float]]:
    """One event log per replicate; one row [tau, L, l, J...] per scaled query time"""
    log = _build_log(rng, alpha, n, i_max, block_length, depth_cap_factor)
    specs = _specs(texts, alpha)
    factor = n ** (1.0 - alpha)
    rows = []
    for s in times:
        path = extract_tree(log, s * factor).path
        rows.append([
            float(path.tau),
            functional_total_length(path),
            functional_external_length(path),
            *[functional_J(path, f) for f in specs],
        ])
    return rows


def limit_replicate(
    rng: np.random.Generator,
    alpha: float,
    text: str,
    times: Tuple[float, ...],
    eps: float,
    r_max: float,
    tail_tolerance: float
) -> np.ndarray:
    f = _specs((text,), alpha)[0]
    return sample_moving_average(f, LimitProfile(alpha), times, eps, r_max, rng, tail_tolerance=tail_tolerance)


def _farm(exp: ExperimentConfig, n: Optional[int] = None) -> ReplicateFarm:
    """Replicate farm of the run, or of one rung of its n-ladder"""
    master = exp.seed if n is None or not exp.n_ladder else derive_seed(exp.seed, *LADDER_KEY, n)
    return ReplicateFarm(master, exp.workers, exp.chunk_size)


# ----------------------------------------------------------------------
# rates
# ----------------------------------------------------------------------

def run_rates(exp: ExperimentConfig, writer: OutputWriter) -> CommandResult:
    ctx = get_rates_context(exp.alpha, exp.i_max)
    b_max = min(exp.n, RATE_TABLE_B_MAX)
    rows = []
    for b in range(2, b_max + 1):
        for k in range(2, b + 1):
            log_rate = ctx.log_merger_rate(b, k)
            rows.append((b, k, math.exp(log_rate), log_rate))
    merger = pd.DataFrame(rows, columns=['b', 'k', 'lambda_bk', 'log_lambda_bk'])
    writer.table('merger_rates', merger, {
        'b': 'number of blocks',
        'k': 'number of merging blocks',
        'lambda_bk': 'rate at which a given k of b blocks merge',
        'log_lambda_bk': 'natural log of lambda_bk',
    })

    table = ctx.total_rate_table(exp.n)
    bs = np.arange(2, exp.n + 1)
    totals = pd.DataFrame({
        'b': bs,
        'lambda_b': table[2:],
        'asymptotic': [ctx.rate_asymptotic(b) for b in bs],
    })
    writer.table('total_rates', totals, {
        'b': 'number of blocks',
        'lambda_b': 'total merger rate sum_k C(b,k) lambda_bk',
        'asymptotic': 'b^alpha / (alpha Gamma(alpha))',
    })
    writer.result.lines.append(
        f"rates for alpha={exp.alpha}: {len(merger)} merger rates, {len(totals)} total rates, envelope M={ctx.envelope:.4g}"
    )
    return writer.result


# ----------------------------------------------------------------------
# static-run
# ----------------------------------------------------------------------

def static_frame(exp: ExperimentConfig, n: int) -> pd.DataFrame:
    """One row per replicate at sample size n"""
    texts = tuple(exp.functionals)
    farm = _farm(exp, n)
    rows = farm.run(static_replicate, exp.replicates, exp.alpha, n, texts, exp.i_max)
    frame = pd.DataFrame(rows, columns=STATIC_VALUE_COLUMNS + [j_column(t) for t in texts])
    frame['tau'] = frame['tau'].astype(np.int64)
    frame.insert(0, 'alpha', exp.alpha)
    frame.insert(0, 'n', n)
    frame.insert(0, 'seed', [farm.seed_for(i) for i in range(exp.replicates)])
    frame.insert(0, 'replicate', np.arange(exp.replicates))
    return frame


def run_static(exp: ExperimentConfig, writer: OutputWriter) -> CommandResult:
    texts = tuple(exp.functionals)
    ladder = exp.ladder()
    frames = [static_frame(exp, n) for n in ladder]
    frame = pd.concat(frames, ignore_index=True)
    columns = dict(STATIC_BASE_COLUMNS)
    for t in texts:
        columns[j_column(t)] = f"J_n(f) for f = {t}"
    writer.table('static_run', frame, columns)

    reports = []
    if exp.replicates >= 50:
        for tag, t in enumerate(texts):
            params = limit_params(j_column(t), exp)
            if params is None:
                continue
            ks_values = []
            for rung, (n, part) in enumerate(zip(ladder, frames)):
                sample = SampleSet(part[j_column(t)].to_numpy(), {'n': n, 'alpha': exp.alpha, 'functional': t, 'seed': exp.seed})
                ks, cf = check_against_limit(sample, params, exp, tag * len(ladder) + rung)
                reports.extend([ks, cf])
                ks_values.append(ks.statistic)
            if len(ladder) >= 3:
                reports.append(trend_report(ladder, ks_values, exp.trend_slack, name=f'trend_{j_column(t)}'))
            if exp.plots and tag == 0:
                reference = sample_stable(params, _verify_rng(exp, 1000 + tag), size=exp.reference_size)
                top = frames[-1][j_column(t)].to_numpy()
                writer.figure(plot_qq(top, reference, writer.out_dir / 'qq.svg', title=f"J_n({t}) vs stable limit, n={ladder[-1]}"))
    writer.reports(reports)
    means = ', '.join(f"n={n}: {part['tau'].mean():.2f}" for n, part in zip(ladder, frames))
    writer.result.lines.append(
        f"static-run: {exp.replicates} replicates per n, alpha={exp.alpha}; mean tau {means}"
    )
    return writer.result


# ----------------------------------------------------------------------
# evolve-run
# ----------------------------------------------------------------------

def trace_document(trace: GenealogyTrace, s: float) -> Dict[str, Any]:
    return {
        's': float(s),
        'query_time': trace.query_time,
        'complete': trace.complete,
        'merger_depths': trace.merger_depths.tolist(),
        'block_counts': trace.block_counts.tolist(),
        'external_depths': trace.external_depths.tolist(),
    }


def dump_traces(log: EventLog, times: Sequence[float], log_digest: str) -> Dict[str, Any]:
    """Genealogies of a log at scaled times; the same bytes whether the log is live or replayed"""
    factor = log.n ** (1.0 - log.alpha)
    traces = [trace_document(extract_tree(log, s * factor), s) for s in times]
    return {
        'tool_version': TOOL_VERSION,
        'event_log_sha256': log_digest,
        'n': log.n,
        'alpha': log.alpha,
        'seed': log.seed,
        'traces': traces,
    }


def theta_vectors(d: int, grid: Sequence[float]) -> np.ndarray:
    """Probe points for d-variate CF checks: scaled unit vectors, the all-ones direction and (1, -1)"""
    if d == 1:
        return np.asarray(grid, dtype=np.float64)[:, None]
    rows = [np.eye(d)[j] for j in range(d)]
    rows.append(np.ones(d))
    contrast = np.zeros(d)
    contrast[0], contrast[1] = 1.0, -1.0
    rows.append(contrast)
    return np.asarray(rows)


def run_evolve(exp: ExperimentConfig, writer: OutputWriter) -> CommandResult:
    texts = tuple(exp.functionals)
    times = tuple(exp.times)
    ladder = exp.ladder()
    records = []
    for n in ladder:
        farm = _farm(exp, n)
        results = farm.run(
            evolve_replicate, exp.replicates, exp.alpha, n, texts, times,
            exp.i_max, exp.block_length, exp.depth_cap_factor,
        )
        for i, rows in enumerate(results):
            for s, row in zip(times, rows):
                records.append([i, farm.seed_for(i), n, s, *row])
    value_cols = ['tau', 'L', 'ell'] + [j_column(t) for t in texts]
    frame = pd.DataFrame(records, columns=['replicate', 'seed', 'n', 's'] + value_cols)
    frame['tau'] = frame['tau'].astype(np.int64)
    columns = {
        'replicate': 'replicate index within its n',
        'seed': 'replicate seed; the event log seed is drawn from default_rng(seed)',
        'n': 'population size n',
        's': 'scaled query time s (t = n^(1-alpha) s)',
        'tau': 'number of mergers of the tree at s',
        'L': 'total branch length of the tree at s',
        'ell': 'external branch length of the tree at s',
    }
    for t in texts:
        columns[j_column(t)] = f"J_n,s(f) for f = {t}"
    writer.table('evolve_run', frame, columns)

    # replicate 0 of the largest n is rebuilt here so its log and trees can be replayed later
    top = ladder[-1]
    log = _build_log(_farm(exp, top).rng_for(0), exp.alpha, top, exp.i_max, exp.block_length, exp.depth_cap_factor)
    for s in times:
        extract_tree(log, s * top ** (1.0 - exp.alpha))
    log_path = writer.out_dir / 'event_log.ebcl'
    digest = write_event_log(log, log_path)
    writer.result.artifacts.append(log_path)
    if log_path.with_suffix('.json').exists():
        writer.result.artifacts.append(log_path.with_suffix('.json'))
    writer.document('traces', dump_traces(log, times, digest), provenance=False)

    reports = []
    d = len(times)
    profile = LimitProfile(exp.alpha)
    if exp.replicates >= 50:
        theta = theta_vectors(d, exp.theta_grid)
        for t in texts:
            f = FunctionalSpec.parse(t, exp.alpha)
            if f.is_zero:
                continue
            distances = []
            for n in ladder:
                values = frame.loc[frame['n'] == n, j_column(t)].to_numpy().reshape(exp.replicates, d)
                sample = SampleSet(values if d > 1 else values[:, 0], {'n': n, 'functional': t, 'times': list(times)})
                report = ecf_distance(
                    sample,
                    lambda th, f=f: joint_cf_moving_average(f, profile, times, np.atleast_1d(th)),
                    theta if d > 1 else theta[:, 0],
                    threshold=EVOLVE_CF_THRESHOLD,
                    name='evolve_joint_cf',
                )
                reports.append(report)
                distances.append(report.statistic)
            if len(ladder) >= 3:
                reports.append(trend_report(ladder, distances, exp.trend_slack, name=f'trend_evolve_{j_column(t)}'))
    writer.reports(reports)
    if exp.plots and d >= 2:
        paths = frame.loc[frame['n'] == top, j_column(texts[0])].to_numpy().reshape(exp.replicates, d)
        writer.figure(plot_series_paths(times, paths, writer.out_dir / 'series_paths.svg', title=f"J_n,s({texts[0]}), n={top}"))
    writer.result.lines.append(
        f"evolve-run: {exp.replicates} replicates at n={ladder}, {d} query times; event log of replicate 0 at n={top} has {len(log)} events"
    )
    return writer.result


# ----------------------------------------------------------------------
# limit-run / limit-cf
# ----------------------------------------------------------------------

def resolve_truncation(f: FunctionalSpec, exp: ExperimentConfig, profile: LimitProfile) -> Tuple[float, float]:
    eps = exp.eps if exp.eps is not None else auto_eps(f, exp.eps_budget, profile)
    r_max = exp.r_max if exp.r_max is not None else auto_r_max(f, profile, exp.tail_tolerance)
    logger.info("truncation for %s: eps=%.4g, r_max=%.6g", f.source or f, eps, r_max)
    return eps, r_max


def run_limit(exp: ExperimentConfig, writer: OutputWriter) -> CommandResult:
    times = tuple(exp.times)
    d = len(times)
    profile = LimitProfile(exp.alpha)
    farm = _farm(exp)
    records = []
    truncation = {}
    reports = []
    for t in exp.functionals:
        f = FunctionalSpec.parse(t, exp.alpha)
        eps, r_max = resolve_truncation(f, exp, profile)
        truncation[t] = {'eps': eps, 'r_max': r_max}
        values = np.asarray(farm.run(limit_replicate, exp.replicates, exp.alpha, t, times, eps, r_max, exp.tail_tolerance))
        values = values.reshape(exp.replicates, d)
        for i in range(exp.replicates):
            for j, s in enumerate(times):
                records.append([i, t, s, values[i, j]])
        if not f.is_zero:
            sample = SampleSet(values if d > 1 else values[:, 0], {'functional': t, 'eps': eps, 'r_max': r_max})
            theta = theta_vectors(d, exp.theta_grid)
            reports.append(ecf_distance(
                sample,
                lambda th, f=f: joint_cf_moving_average(f, profile, times, np.atleast_1d(th)),
                theta if d > 1 else theta[:, 0],
                tolerance=LIMIT_CF_TOLERANCE,
                name='limit_joint_cf',
            ))
    frame = pd.DataFrame(records, columns=['replicate', 'functional', 's', 'value'])
    writer.table('limit_run', frame, {
        'replicate': 'replicate index (its RNG stream key)',
        'functional': 'functional text',
        's': 'scaled time',
        'value': 'moving average int_0^inf g(r) dL_(s-r) from the eps-truncated buffer',
    })
    writer.document('truncation', {'functionals': truncation})
    writer.reports(reports)
    writer.result.lines.append(f"limit-run: {exp.replicates} replicates x {d} times for {len(exp.functionals)} functionals")
    return writer.result


def run_limit_cf(exp: ExperimentConfig, writer: OutputWriter) -> CommandResult:
    times = tuple(exp.times)
    d = len(times)
    profile = LimitProfile(exp.alpha)
    tables = {}
    for t in exp.functionals:
        f = FunctionalSpec.parse(t, exp.alpha)
        theta = theta_vectors(d, exp.theta_grid)
        values = [joint_cf_moving_average(f, profile, times, row) for row in theta]
        tables[t] = {
            'theta': (theta[:, 0] if d == 1 else theta).tolist(),
            're': [v.real for v in values],
            'im': [v.imag for v in values],
        }
    writer.document('limit_cf', {'alpha': exp.alpha, 'times': list(times), 'functionals': tables})
    writer.result.lines.append(f"limit-cf: {len(tables)} CF tables over {len(exp.theta_grid) if d == 1 else d + 2} points")
    return writer.result


# ----------------------------------------------------------------------
# verify / replay
# ----------------------------------------------------------------------

def load_table(path) -> pd.DataFrame:
    path = Path(path)
    if path.suffix == '.json':
        payload = json.loads(path.read_text(encoding='utf-8'))
        return pd.DataFrame(payload['records'], columns=payload['columns'])
    return pd.read_csv(path, comment='#')


def run_verify(
    exp: ExperimentConfig,
    writer: OutputWriter,
    inputs: Sequence[str],
    column: str,
    reference: Optional[str] = None
) -> CommandResult:
    """
    Compare one column of run tables against its stable limit or a reference table

    A table with an `n` column is split by n.  With three or more distinct
    n across the inputs the KS statistics also get a trend report.
    """
    reports = []
    ladder = []
    parts = []
    for path in inputs:
        frame = load_table(path)
        if column not in frame.columns:
            raise MissingFieldError(f"{path} has no column {column!r}")
        if 'n' in frame.columns:
            parts.extend((path, int(n), group) for n, group in frame.groupby('n', sort=True))
        else:
            parts.append((path, exp.n, frame))
    for tag, (path, n, frame) in enumerate(parts):
        sample = SampleSet(frame[column].to_numpy(), {'file': str(path), 'n': n, 'column': column})
        if reference is not None:
            ref_frame = load_table(reference)
            ref = SampleSet(ref_frame[column].to_numpy(), {'file': str(reference), 'column': column})
            ks = ks_two_sample(sample, ref, exp.significance)
            reports.append(ks)
        else:
            params = limit_params(column, exp)
            if params is None:
                raise DomainError(f"column {column!r} has no stable limit to verify against")
            ks, cf = check_against_limit(sample, params, exp, tag)
            reports.extend([ks, cf])
        ladder.append((n, ks.statistic))
    if len(ladder) >= 3 and len({n for n, _ in ladder}) == len(ladder):
        ladder.sort()
        reports.append(trend_report([n for n, _ in ladder], [v for _, v in ladder], exp.trend_slack))
    writer.reports(reports)
    passed = sum(r.passed for r in reports)
    writer.result.lines.append(f"verify: {passed}/{len(reports)} checks passed for column {column}")
    return writer.result


def run_replay(exp: ExperimentConfig, writer: OutputWriter, log_path: str) -> CommandResult:
    """Re-extract trees from a persisted log; never extends it"""
    log = read_event_log(log_path)
    digest = file_ops.get_file_hash(log_path)
    writer.document('traces', dump_traces(log, exp.times, digest), provenance=False)
    writer.result.lines.append(f"replay: {len(exp.times)} trees from {log_path} ({len(log)} events)")
    return writer.result
