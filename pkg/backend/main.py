"""
ebcl command line

    python backend/main.py static-run --alpha 1.5 --n 10000 --replicates 2000 --functional tau
    python backend/main.py evolve-run --times 0 1 2 --out data/runs/evolve
    python backend/main.py suite --suite smoke

Exit status: 0 when every test report passed, 1 when some failed,
2 on invalid input or a domain error.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from cli.commands import (
    CommandResult,
    OutputWriter,
    run_evolve,
    run_limit,
    run_limit_cf,
    run_rates,
    run_replay,
    run_static,
    run_verify,
)
from cli.models import SUITES, TOOL_VERSION, ExperimentConfig
from cli.suites import CHECKS, run_suite
from config import Config, config
from database import RunLedger
from errors import ConfigValidationError, EBCLError
from init_db import init_database
from utils.file_lock import lock_manager
from utils.file_ops import file_ops

logger = logging.getLogger('ebcl')


def setup_logging(level: str, log_file: Optional[str]):
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='ebcl', description="Evolving Beta-coalescent fluctuation toolkit")
    parser.add_argument('--version', action='version', version=f"ebcl {TOOL_VERSION}")
    parser.add_argument('--config', default='config.yaml', help="YAML settings file")
    sub = parser.add_subparsers(dest='command', required=True)

    def experiment_flags(p: argparse.ArgumentParser):
        p.add_argument('--alpha', type=float)
        p.add_argument('--n', type=int)
        p.add_argument('--n-ladder', type=int, nargs='+', dest='n_ladder')
        p.add_argument('--replicates', type=int)
        p.add_argument('--functional', action='append', dest='functionals',
                       help="preset name or power-sum expression; repeatable")
        p.add_argument('--times', type=float, nargs='+')
        p.add_argument('--eps', type=float)
        p.add_argument('--rmax', type=float, dest='r_max')
        p.add_argument('--seed', type=int)
        p.add_argument('--out')
        p.add_argument('--format', choices=('csv', 'json'))
        p.add_argument('--workers', type=int)
        p.add_argument('--no-plots', action='store_false', dest='plots', default=None)

    for name in ('rates', 'static-run', 'evolve-run', 'limit-run', 'limit-cf'):
        experiment_flags(sub.add_parser(name))

    p = sub.add_parser('verify', help="compare run tables with their limit or a reference")
    experiment_flags(p)
    p.add_argument('--input', action='append', required=True, dest='inputs')
    p.add_argument('--column', required=True)
    p.add_argument('--reference')

    p = sub.add_parser('replay', help="re-extract trees from a persisted event log")
    experiment_flags(p)
    p.add_argument('--log', required=True, dest='event_log')

    p = sub.add_parser('suite', help="run a packaged verification suite")
    experiment_flags(p)
    p.add_argument('--suite', choices=SUITES, default='smoke')
    p.add_argument('--only', action='append', default=[], help="restrict to named checks")

    p = sub.add_parser('history', help="list recent runs from the ledger")
    p.add_argument('--limit', type=int, default=20)
    p.add_argument('--run-id', type=int, dest='run_id', help="show one run and re-hash its artifacts")
    return parser


def overrides_from(args: argparse.Namespace) -> Dict[str, Any]:
    keys = ('alpha', 'n', 'n_ladder', 'replicates', 'functionals', 'times', 'eps', 'r_max',
            'seed', 'out', 'format', 'workers', 'plots', 'suite', 'event_log')
    return {k: getattr(args, k, None) for k in keys}


def dispatch(args: argparse.Namespace, exp: ExperimentConfig, writer: OutputWriter) -> CommandResult:
    command = args.command
    if command == 'rates':
        return run_rates(exp, writer)
    if command == 'static-run':
        return run_static(exp, writer)
    if command == 'evolve-run':
        return run_evolve(exp, writer)
    if command == 'limit-run':
        return run_limit(exp, writer)
    if command == 'limit-cf':
        return run_limit_cf(exp, writer)
    if command == 'verify':
        return run_verify(exp, writer, args.inputs, args.column, args.reference)
    if command == 'replay':
        return run_replay(exp, writer, args.event_log)
    unknown = [name for name in args.only if name not in dict(CHECKS[args.suite])]
    if unknown:
        raise ConfigValidationError({'only': f"unknown checks {unknown} for suite {args.suite}"})
    return run_suite(exp, writer, args.suite, args.only)


async def record_run(ledger: RunLedger, command: str, exp: ExperimentConfig, result: Optional[CommandResult],
                     error: Optional[str]) -> int:
    run_id = await ledger.start_run(command, exp.config_hash(), exp.seed, TOOL_VERSION, exp.out)
    if result is not None:
        for path in result.artifacts:
            await ledger.add_artifact(run_id, str(path), file_ops.get_file_hash(path))
        for report in result.reports:
            await ledger.add_report(run_id, report.to_dict())
    if error is not None:
        status = 'error'
    else:
        status = 'passed' if result.all_passed else 'failed'
    await ledger.finish_run(run_id, status, error)
    return run_id


def print_result(result: CommandResult):
    for line in result.lines:
        print(f"  {line}")
    for report in result.reports:
        mark = '✓' if report.passed else '✗'
        print(f"  {mark} {report.test}: {report.statistic:.6g} ({report.orientation} {report.threshold:.6g})")
    for path in result.artifacts:
        print(f"  → {path}")
    if result.reports:
        failed = sum(not r.passed for r in result.reports)
        if failed:
            print(f"⚠ {failed} of {len(result.reports)} checks failed")
        else:
            print(f"✓ all {len(result.reports)} checks passed")


async def show_history(db_path: str, limit: int):
    ledger = RunLedger(db_path)
    for run in await ledger.get_recent_runs(limit):
        reports = await ledger.get_reports(run['id'])
        passed = sum(r['pass'] for r in reports)
        print(f"{run['id']:>5}  {run['started_at']}  {run['command']:<11} {run['status'] or 'running':<8} "
              f"checks={passed}/{len(reports)} seed={run['seed']} hash={run['config_hash'][:12]} out={run['out_dir']}")
        for report in reports:
            if not report['pass']:
                print(f"         ✗ {report['test']}: {report['statistic']:.6g} vs {report['threshold']:.6g}")


async def show_run(db_path: str, run_id: int) -> int:
    """Details of one run; artifacts are re-hashed against the ledger. Returns the exit status."""
    ledger = RunLedger(db_path)
    run = await ledger.get_run(run_id)
    if run is None:
        print(f"✗ no run with id {run_id}", file=sys.stderr)
        return 2
    print(f"run {run['id']}: {run['command']} {run['status'] or 'running'}")
    print(f"  started {run['started_at']}  finished {run['finished_at']}")
    print(f"  seed={run['seed']} config_hash={run['config_hash']} tool_version={run['tool_version']}")
    if run['error_message']:
        print(f"  ✗ {run['error_message']}")
    altered = 0
    for artifact in await ledger.get_artifacts(run_id):
        path = Path(artifact['path'])
        if not path.exists():
            mark, note = '⚠', 'missing'
        elif file_ops.get_file_hash(path) != artifact['sha256']:
            mark, note = '✗', 'changed since the run'
        else:
            mark, note = '✓', artifact['sha256'][:12]
        altered += mark != '✓'
        print(f"  {mark} {path} ({note})")
    for report in await ledger.get_reports(run_id):
        mark = '✓' if report['pass'] else '✗'
        print(f"  {mark} {report['test']}: {report['statistic']:.6g} vs {report['threshold']:.6g}")
    return 1 if altered else 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = config if args.config == 'config.yaml' else Config(args.config)
    setup_logging(cfg.log_level, cfg.log_file)
    init_database(cfg.db_path, quiet=True)

    if args.command == 'history':
        if args.run_id is not None:
            return asyncio.run(show_run(cfg.db_path, args.run_id))
        asyncio.run(show_history(cfg.db_path, args.limit))
        return 0

    try:
        exp = ExperimentConfig.from_sources(cfg, overrides_from(args))
    except ConfigValidationError as exc:
        for field, message in exc.errors.items():
            print(f"✗ {field}: {message}", file=sys.stderr)
        return 2

    ledger = RunLedger(cfg.db_path)
    result = CommandResult(args.command)
    error = None
    try:
        with lock_manager.lock_directory(exp.out):
            writer = OutputWriter(exp.out, exp, result)
            dispatch(args, exp, writer)
            writer.finish()
    except (EBCLError, TimeoutError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        error = f"{type(exc).__name__}: {exc}"

    run_id = asyncio.run(record_run(ledger, args.command, exp, result, error))
    if error is not None:
        print(f"✗ {args.command}: {error}", file=sys.stderr)
        return 2
    print(f"{args.command} (run {run_id}, config {exp.config_hash()[:12]})")
    print_result(result)
    return 0 if result.all_passed else 1


if __name__ == '__main__':
    sys.exit(main())
