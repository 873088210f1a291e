"""
kworst/main.py

The command line entry point. Every command reads an optional JSON run
configuration (`--config`) and writes its tables plus a `manifest.json` into
the output directory.

    python main.py synth --out data/synth --seed 7
    python main.py disagreement --config run.json
    python main.py frontier --config run.json --k 2
    python main.py backtest --config run.json

Exit codes: 0 success, 1 configuration error, 2 partial solver failure,
3 I/O error.
"""

import argparse
import logging
import os
import sys
from typing import Callable, Optional

import pandas as pd
from pydantic import ValidationError

from main.backtest import align_scores, run, save_report
from main.baselines import table_roster
from main.frontier import export_surface, mean_variance_frontier, trace_surface
from main.ingest import estimate_moments, load_prices
from main.ksum import KsumInstance
from main.metrics import evaluate, roi_table
from main.model import (
    ConfigError,
    DegenerateRowError,
    InfeasibleError,
    InputError,
    InsufficientDataError,
    InvalidArgumentError,
    ParseError,
    RunConfig,
    ScoreHistory,
    ShapeError,
    SolverFailedError,
    StrategyKind,
    load_run_config,
)
from main.scores import METRICS, disagreement, load_scores, normalize
from main.storage import OutputUOW, format_cell
from main.synth import generate, write_dataset

logger = logging.getLogger('kworst')

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_IO = 3

# bad or mismatched inputs the user fixes in the configuration
CONFIG_ERRORS = (
    ConfigError,
    ValidationError,
    InvalidArgumentError,
    ShapeError,
    InsufficientDataError,
    InputError,
    DegenerateRowError,
    InfeasibleError,
)
IO_ERRORS = (OSError, ParseError)


def load_history(run_config: RunConfig) -> ScoreHistory:
    run_config.check_inputs('scores', 'score_meta')
    return load_scores(run_config.scores, run_config.score_meta)


def agencies_of(run_config: RunConfig, history: ScoreHistory) -> list[str]:
    """
    Returns the agencies a run uses, checking the subset and every `k`
    against them.
    """

    known = history.latest().agency_ids
    agencies = run_config.agencies or known
    unknown = [i for i in agencies if i not in known]
    if unknown:
        raise ConfigError(f'Unknown agency(s): {", ".join(unknown)}')
    too_large = [k for k in run_config.k if k > len(agencies)]
    if too_large:
        raise ConfigError(
            f'k = {too_large[0]} exceeds the {len(agencies)} agencies in use.'
        )
    if run_config.mv_esg_agency and run_config.mv_esg_agency not in agencies:
        raise ConfigError(
            f'MV-ESG agency {run_config.mv_esg_agency!r} is not in use.'
        )
    return list(agencies)


def print_table(frame: pd.DataFrame) -> None:
    print(frame.map(format_cell).to_string(index=False))


def cmd_disagreement(run_config: RunConfig) -> int:
    history = load_history(run_config)
    panel = history.latest()
    panel = panel.restrict(agencies_of(run_config, history))
    scores = normalize(panel)

    pairs, averages = [], []
    for metric in METRICS:
        report = disagreement(scores, metric)
        raw = disagreement(
            panel.raw, metric, agency_ids=panel.agency_ids, asset_ids=panel.asset_ids
        )
        for (a, b, value), (_, _, raw_value) in zip(report.pairs(), raw.pairs()):
            pairs.append([metric, a, b, value, raw_value])
        averages.append([metric, report.average, report.average_100, raw.average])
        if report.undefined_pairs:
            logger.warning(
                '%s is undefined for %d pair(s).', metric, len(report.undefined_pairs)
            )

    pairs = pd.DataFrame(
        pairs, columns=['metric', 'agency_a', 'agency_b', 'distance', 'raw_distance']
    )
    averages = pd.DataFrame(
        averages, columns=['Metric', 'Average', 'Average x100', 'Raw average']
    )
    # the gaps don't depend on the metric, so the last pair of reports serves
    gaps = report.asset_gaps()
    gaps['raw_gap'] = raw.asset_gaps()['gap']

    with OutputUOW(
        directory=run_config.out,
        command='disagreement',
        config_hash=run_config.config_hash(),
    ) as uow:
        uow.artifacts.add_table('disagreement_pairs', pairs)
        uow.artifacts.add_table('disagreement_average', averages)
        uow.artifacts.add_table('disagreement_assets', gaps)
        uow.manifest['agencies'] = panel.agency_ids
        uow.commit()

    print(f'Average disagreement of {", ".join(panel.agency_ids)}:')
    print_table(averages)
    return EXIT_OK


def cmd_frontier(run_config: RunConfig) -> int:
    run_config.check_inputs('prices')
    market = load_prices(run_config.prices, index_column=run_config.index_column)
    history = load_history(run_config)
    agencies = agencies_of(run_config, history)

    length = run_config.backtest.in_sample_length
    rows = len(market.returns)
    moments = estimate_moments(market, (max(0, rows - length), rows))
    panel = align_scores(
        history, market.dates[-1], asset_ids=market.asset_ids, agencies=agencies
    )

    code = EXIT_OK
    for k in run_config.k:
        instance = KsumInstance.from_panel(moments, panel, k)
        print(f'Tracing the k = {k} surface of {instance.n} assets.')
        surface = trace_surface(
            instance,
            run_config.frontier.n_mu,
            run_config.frontier.n_gamma,
            settings=run_config.solver,
            workers=run_config.backtest.workers,
        )
        baseline = mean_variance_frontier(
            instance.sigma,
            instance.mu,
            run_config.frontier.n_mu,
            run_config.solver,
            instance=instance,
        )

        with OutputUOW(
            directory=os.path.join(run_config.out, f'frontier_k{k}'),
            command='frontier',
            config_hash=run_config.config_hash(),
        ) as uow:
            export_surface(surface, uow)
            uow.artifacts.add_table(
                'mean_variance',
                pd.DataFrame(
                    [
                        [i.mu_bar, i.variance, i.expected_return, i.kworst_score, i.status.value]
                        for i in baseline
                    ],
                    columns=['mu_bar', 'variance', 'exp_return', 'kworst_score', 'status'],
                ),
            )
            uow.commit()

        failed = len(surface.failed())
        print(f'Solved {len(surface) - failed} of {len(surface)} points.')
        if failed > run_config.frontier.max_failed_share * len(surface):
            logger.error('%d of %d surface points failed for k = %d.', failed, len(surface), k)
            code = EXIT_PARTIAL
    return code


def _subset(table, names: list[str]):
    return type(table)([table[i] for i in names])


def cmd_backtest(run_config: RunConfig) -> int:
    run_config.check_inputs('prices')
    market = load_prices(run_config.prices, index_column=run_config.index_column)

    history, agencies = None, None
    if run_config.scores is not None:
        history = load_history(run_config)
        agencies = agencies_of(run_config, history)

    strategies = run_config.backtest.strategies
    if not strategies:
        agency = run_config.mv_esg_agency or (agencies[0] if agencies else None)
        if agency is None:
            logger.warning('No score file, running the score-free strategies only.')
        strategies = table_roster(ks=run_config.k if agency else (), agency=agency)
    backtest = run_config.backtest.model_copy(update={'strategies': strategies})

    print(f'Backtesting {len(strategies)} strategies on {market.n_assets} assets.')
    report = run(
        market, history, backtest, agencies=agencies, settings=run_config.solver
    )
    metrics, rois = evaluate(report), roi_table(report)

    # one table per k, the score-free and MV-ESG strategies shared by all
    ks = sorted({i.k for i in strategies if i.kind is StrategyKind.KWORST})
    groups = {
        f'_k{k}': [
            i.name for i in strategies if i.kind is not StrategyKind.KWORST or i.k == k
        ]
        for k in ks
    } or {'': [i.name for i in strategies]}

    with OutputUOW(
        directory=run_config.out,
        command='backtest',
        config_hash=run_config.config_hash(),
    ) as uow:
        save_report(report, uow)
        for suffix, names in groups.items():
            uow.artifacts.add_table(f'metrics{suffix}', _subset(metrics, names).to_frame())
            uow.artifacts.add_table(f'roi{suffix}', _subset(rois, names).to_frame())
        uow.commit()

    print_table(metrics.to_frame())
    if report.failures:
        logger.error('%d strategy solve(s) were replaced by held weights.', report.failures)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_synth(run_config: RunConfig) -> int:
    dataset = generate(run_config.synth, run_config.seed)
    paths = write_dataset(dataset, run_config.out)

    with OutputUOW(
        directory=run_config.out,
        command='synth',
        config_hash=run_config.config_hash(),
    ) as uow:
        uow.manifest.update(
            {
                'seed': run_config.seed,
                'dataset': {role: os.path.basename(path) for role, path in paths.items()},
                'index_column': dataset.market.index_id,
            }
        )
        uow.commit()

    print(
        f'Wrote {dataset.market.n_assets} assets over {len(dataset.market.dates)} '
        f'dates and {len(dataset.scores)} score panel(s) to {run_config.out}.'
    )
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    'disagreement': cmd_disagreement,
    'frontier': cmd_frontier,
    'backtest': cmd_backtest,
    'synth': cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='k-Worst Non-ESG portfolio selection and backtesting.'
    )
    parser.add_argument('command', choices=list(COMMANDS))
    parser.add_argument('--config', help='JSON run configuration')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--k', type=int, help='run a single k')
    parser.add_argument('--seed', type=int, help='synthetic data seed')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(levelname)s %(name)s: %(message)s',
    )

    try:
        run_config = load_run_config(
            args.config,
            out=args.out,
            seed=args.seed,
            k=None if args.k is None else [args.k],
        )
        return COMMANDS[args.command](run_config)
    except CONFIG_ERRORS as exc:
        logger.error('Configuration error: %s', exc)
        return EXIT_CONFIG
    except SolverFailedError as exc:
        logger.error('Solver failure: %s', exc)
        return EXIT_PARTIAL
    except IO_ERRORS as exc:
        logger.error('I/O error: %s', exc)
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
