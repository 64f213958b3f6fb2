# fivestar/cli.py
"""
Command-line entry point.

    fivestar analyze  --data trial.csv --config analysis.yaml --out report/ [--seed N]
    fivestar km       --data trial.csv [--config ...] [--out km.csv]
    fivestar logrank  --data trial.csv [--rho R --gamma G]
    fivestar rmst     --data trial.csv [--tau T]
    fivestar maxcombo --data trial.csv [--method mvn|permutation] [--seed N]
    fivestar simulate --scenario alt1 --reps 2000 --seed 7 --workers 8 --out sim/

Single analyses print their result as JSON on stdout; logs go to stderr.
Exit codes: 0 success, 2 invalid input (data, config, missing file),
3 numerical failure.
"""

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import pandas as pd
from pydantic import BaseModel, ValidationError
from yaml import YAMLError

from fivestar.exceptions import AnalysisStepError, DataValidationError, NumericalError
from fivestar.models import TrialDataset
from fivestar.nonparam import km, maxcombo, rmst_compare, weighted_logrank
from fivestar.pipeline import FiveStarPipeline
from fivestar.result_models import ScenarioSpec, SimSummary
from fivestar.simlab import run_scenario, summarize
from fivestar.utils import AnalysisConfig, load_config, setup_logger
from fivestar.utils.config_loader import ALL_METHODS

logger: logging.Logger = logging.getLogger(__name__)

EXIT_OK: int = 0
EXIT_INVALID: int = 2
EXIT_NUMERICAL: int = 3


def _config(args: argparse.Namespace) -> AnalysisConfig:
    config: AnalysisConfig = load_config(args.config)
    if getattr(args, 'seed', None) is not None:
        config = config.with_seed(args.seed)
    level: int | None = None
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    setup_logger(config=config, console_override=level)
    return config


def _load(args: argparse.Namespace, config: AnalysisConfig) -> TrialDataset:
    return FiveStarPipeline(config=config, configure_logging=False).load(args.data)


def _print(model: BaseModel) -> None:
    sys.stdout.write(model.model_dump_json(indent=2) + '\n')


# =============================================================================
# Commands
# =============================================================================


def _analyze(args: argparse.Namespace) -> int:
    config: AnalysisConfig = _config(args)
    pipeline: FiveStarPipeline = FiveStarPipeline(config=config, configure_logging=False)
    report = pipeline.run(args.data, args.out)
    tr = report.step5.tr
    sys.stdout.write(
        f'c={report.step3.assignment.c} TR={tr.estimate:.3f} '
        f'({tr.ci_lower:.3f}, {tr.ci_upper:.3f}) p={tr.p_value:.4g}\n'
    )
    return EXIT_OK


def _km(args: argparse.Namespace) -> int:
    data: TrialDataset = _load(args, _config(args))
    frames: list[pd.DataFrame] = []
    for arm, mask in (('A', data.treated), ('B', ~data.treated)):
        if not mask.any():
            continue
        curve = km(data.times[mask], data.events[mask])
        frames.append(
            pd.DataFrame(
                {
                    'arm': arm,
                    'time': [0.0, *curve.knots],
                    'survival': [curve.initial_value, *curve.values],
                    'variance': [0.0, *curve.variances],
                }
            )
        )
    table: pd.DataFrame = pd.concat(frames, ignore_index=True)
    if args.out is not None:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out, index=False)
        logger.info('Wrote %s', args.out)
    else:
        table.to_csv(sys.stdout, index=False)
    return EXIT_OK


def _logrank(args: argparse.Namespace) -> int:
    data: TrialDataset = _load(args, _config(args))
    _print(weighted_logrank(data, rho=args.rho, gamma=args.gamma))
    return EXIT_OK


def _rmst(args: argparse.Namespace) -> int:
    config: AnalysisConfig = _config(args)
    data: TrialDataset = _load(args, config)
    tau: float | None = args.tau if args.tau is not None else config.comparators.rmst_tau
    _print(rmst_compare(data, tau))
    return EXIT_OK


def _maxcombo(args: argparse.Namespace) -> int:
    config: AnalysisConfig = _config(args)
    data: TrialDataset = _load(args, config)
    _print(
        maxcombo(
            data,
            method=args.method or config.comparators.maxcombo_method,
            seed=config.step_seed('maxcombo'),
            perm_reps=args.perm_reps or config.comparators.maxcombo_perm_reps,
        )
    )
    return EXIT_OK


def _simulate(args: argparse.Namespace) -> int:
    config: AnalysisConfig = _config(args)
    section = config.simulation
    scenarios: list[str] = args.scenario or [section.scenario]
    summaries: list[SimSummary] = [
        run_scenario(
            ScenarioSpec.preset(name),
            methods=args.methods or section.methods,
            reps=args.reps or section.reps,
            seed=config.seed,
            workers=args.workers or section.workers,
            config=config,
            replicate_log=(
                Path(args.out) / f'replicates_{name}.parquet'
                if args.replicate_log or section.replicate_log
                else None
            ),
        )
        for name in scenarios
    ]
    table: pd.DataFrame = summarize(summaries, args.out, config.report.float_format)
    sys.stdout.write(table.to_string(index=False) + '\n')
    return EXIT_OK


# =============================================================================
# Parser
# =============================================================================


def _common(parser: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        parser.add_argument('--data', type=Path, required=True, help='Trial CSV file.')
    parser.add_argument('--config', type=Path, default=None, help='YAML/JSON analysis config.')
    parser.add_argument('--seed', type=int, default=None, help='Root seed (overrides the config).')
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument('-v', '--verbose', action='store_true', help='Log at DEBUG.')
    noise.add_argument('-q', '--quiet', action='store_true', help='Log warnings only.')


def build_parser() -> argparse.ArgumentParser:
    parser: argparse.ArgumentParser = argparse.ArgumentParser(
        prog='fivestar',
        description='Stratified survival analysis for randomized trials.',
    )
    commands = parser.add_subparsers(dest='command', required=True)

    analyze = commands.add_parser('analyze', help='Run the full stratified analysis.')
    _common(analyze)
    analyze.add_argument('--out', type=Path, default=None, help='Report directory.')
    analyze.set_defaults(handler=_analyze)

    curves = commands.add_parser('km', help='Kaplan-Meier curve per arm.')
    _common(curves)
    curves.add_argument('--out', type=Path, default=None, help='CSV file (default: stdout).')
    curves.set_defaults(handler=_km)

    test = commands.add_parser('logrank', help='(Weighted) logrank test, A vs B.')
    _common(test)
    test.add_argument('--rho', type=float, default=0.0)
    test.add_argument('--gamma', type=float, default=0.0)
    test.set_defaults(handler=_logrank)

    area = commands.add_parser('rmst', help='Restricted mean survival time comparison.')
    _common(area)
    area.add_argument('--tau', type=float, default=None, help='Horizon (default: feasible maximum).')
    area.set_defaults(handler=_rmst)

    combo = commands.add_parser('maxcombo', help='MaxCombo test over four weightings.')
    _common(combo)
    combo.add_argument('--method', choices=['mvn', 'permutation'], default=None)
    combo.add_argument('--perm-reps', type=int, default=None)
    combo.set_defaults(handler=_maxcombo)

    simulate = commands.add_parser('simulate', help='Operating characteristics by simulation.')
    _common(simulate, data=False)
    simulate.add_argument(
        '--scenario',
        action='append',
        choices=['null', 'alt1', 'alt2', 'alt3'],
        help='Scenario to run (repeatable).',
    )
    simulate.add_argument('--reps', type=int, default=None)
    simulate.add_argument('--workers', type=int, default=None)
    simulate.add_argument('--methods', nargs='+', choices=list(ALL_METHODS), default=None)
    simulate.add_argument('--out', type=Path, default=Path('fivestar_simulation'))
    simulate.add_argument(
        '--replicate-log', action='store_true', help='Also write the per-replicate Parquet log.'
    )
    simulate.set_defaults(handler=_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run the command and map failures to exit codes."""
    args: argparse.Namespace = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (DataValidationError, ValidationError, FileNotFoundError, YAMLError) as e:
        logger.error('Invalid input: %s', e)
        sys.stderr.write(f'error: {e}\n')
        return EXIT_INVALID
    except (NumericalError, AnalysisStepError) as e:
        logger.error('Numerical failure: %s', e)
        sys.stderr.write(f'error: {e}\n')
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
