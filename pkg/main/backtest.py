"""
kworst/main/backtest.py

The rolling time window backtest.

At every rebalance date the moments are estimated on the trailing
`in_sample_length` returns, the score panel in force is normalized, every
strategy is solved, and the weights are held (without drift) for
`rebalance_period` days. The held portfolios' daily returns make up the
out-of-sample series.

Value Models:
* WindowDiagnostic: How one strategy's solve went in one window.

Models:
* Window: The estimation data of one rebalance date.
* StrategyRun: One strategy's weights, returns and wealth.
* BacktestReport: Every strategy's run plus the benchmark.

Functions:
* align_scores: The Non-ESG panel in force at a date.
* solve_strategy: One strategy's weights in one window.
* run: Runs a backtest.
* save_report, load_report: The report directory round trip.
"""

import logging
import threading
from concurrent import futures
from datetime import date
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from .baselines import (
    equally_weighted,
    gmin_variance,
    most_diversified,
    mv_esg,
    mv_esg_profiles,
    risk_parity,
    solve_weights,
)
from .frontier import KWorstTarget, select_profiles
from .ingest import estimate_moments
from .ksum import KsumInstance, build_epsilon_constraint
from .model import config
from .model.config import SolverSettings
from .model.errors import (
    ConfigError,
    InfeasibleError,
    InputError,
    InsufficientDataError,
    ParseError,
    SolverFailedError,
)
from .model.market import MarketData, MomentEstimate
from .model.panel import NonEsgPanel, ScoreHistory
from .model.strategy import BacktestConfig, StrategyKind, StrategySpec
from .scores import normalize
from .storage import OutputUOW, parse_cell

logger = logging.getLogger(__name__)

# failures that carry the previous weights forward instead of stopping
STRATEGY_FAILURES = (SolverFailedError, InfeasibleError, InputError)


class WindowDiagnostic(BaseModel):
    """
    A frozen model of one strategy in one window.

    Attributes / Arguments:
    * rebalance_date (`datetime.date`): The rebalance date.
    * status (`str`): `"solved"`, or `"carried-forward"` / `"equal-weight"`
        when the solve failed and older (or equal) weights were held instead.
    * message (optional `str`): Why the solve failed.
    """

    model_config = ConfigDict(frozen=True)

    rebalance_date: date
    status: str = 'solved'
    message: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.status != 'solved'


class Window:
    """
    The estimation data of one rebalance date, with the strategy targets it
    implies cached.

    Arguments / Attributes:
    * date (`datetime.date`): The rebalance date.
    * moments (`MomentEstimate`): The in-sample moments.
    * scores (optional `NonEsgPanel`): The Non-ESG panel in force, aligned to
        the market's assets.

    Methods:
    * instance (`KsumInstance` method): The k-Worst instance for a `k`.
    * kworst_target (`KWorstTarget` method): A cached k-Worst target.
    * esg_target (`tuple[float, float]` method): A cached MV-ESG target.
    * prepare (method): Computes every target a roster needs, in parallel.
    """

    __slots__ = ('date', 'moments', 'scores', '_targets', '_lock')

    def __init__(
        self,
        when: date,
        moments: MomentEstimate,
        scores: Optional[NonEsgPanel] = None,
    ):
        self.date = when
        self.moments = moments
        self.scores = scores
        self._targets: dict[tuple, object] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f'Window({self.date.isoformat()}, {self.moments.window})'

    def _panel(self) -> NonEsgPanel:
        if self.scores is None:
            raise ConfigError('This strategy needs agency scores.')
        return self.scores

    def instance(self, k: int) -> KsumInstance:
        return KsumInstance.from_panel(self.moments, self._panel(), k)

    def _lookup(self, key: tuple, compute) -> object:
        with self._lock:
            found = self._targets.get(key)
        if found is None:
            # solved outside the lock; the first insert wins
            keys, results = compute()
            with self._lock:
                for which, result in zip(keys, results):
                    self._targets.setdefault(which, result)
                found = self._targets[key]
        if isinstance(found, Exception):
            raise found
        return found

    def _kworst_group(self, k: int, alphas: Sequence[float], fraction: float, settings):
        keys = [('KWorst', k, alpha, fraction) for alpha in alphas]
        try:
            targets = select_profiles(self.instance(k), alphas, fraction, settings)
        except STRATEGY_FAILURES as exc:
            return keys, [exc] * len(keys)
        return keys, targets

    def _esg_group(self, agency: str, alphas: Sequence[float], fraction: float, settings):
        keys = [('MV-ESG', agency, alpha, fraction) for alpha in alphas]
        try:
            targets = mv_esg_profiles(
                self.moments.sigma,
                self.moments.mu,
                self._panel().esg_row(agency),
                alphas,
                fraction,
                settings,
            )
        except STRATEGY_FAILURES as exc:
            return keys, [exc] * len(keys)
        return keys, targets

    def kworst_target(
        self, k: int, alpha: float, fraction: float, settings=None
    ) -> KWorstTarget:
        return self._lookup(
            ('KWorst', k, alpha, fraction),
            lambda: self._kworst_group(k, [alpha], fraction, settings),
        )

    def esg_target(
        self, agency: str, alpha: float, fraction: float, settings=None
    ) -> tuple[float, float]:
        return self._lookup(
            ('MV-ESG', agency, alpha, fraction),
            lambda: self._esg_group(agency, [alpha], fraction, settings),
        )

    def prepare(
        self,
        strategies: Sequence[StrategySpec],
        settings: Optional[SolverSettings] = None,
        executor: Optional[futures.Executor] = None,
    ) -> None:
        """
        Computes the targets of every targeted strategy, one group per `k` (or
        agency) and fraction, so shared return ranges are solved once.
        """

        groups: dict[tuple, list[float]] = {}
        for spec in strategies:
            if spec.kind is StrategyKind.KWORST:
                key = ('KWorst', spec.k, spec.target_fraction)
            elif spec.kind is StrategyKind.MV_ESG:
                key = ('MV-ESG', spec.agency, spec.target_fraction)
            else:
                continue
            alphas = groups.setdefault(key, [])
            if spec.target_alpha not in alphas:
                alphas.append(spec.target_alpha)

        def compute(item):
            (kind, which, fraction), alphas = item
            if kind == 'KWorst':
                return self._kworst_group(which, alphas, fraction, settings)
            return self._esg_group(which, alphas, fraction, settings)

        mapper = map if executor is None else executor.map
        for keys, results in mapper(compute, groups.items()):
            with self._lock:
                for key, result in zip(keys, results):
                    self._targets.setdefault(key, result)


def align_scores(
    history: ScoreHistory,
    when: date,
    *,
    asset_ids: Optional[Sequence[str]] = None,
    agencies: Optional[Sequence[str]] = None,
    constant_fallback: Optional[bool] = None,
) -> NonEsgPanel:
    """
    Returns the Non-ESG panel in force at `when`: the most recent panel dated
    on or before it, restricted to `agencies`, aligned to `asset_ids`, then
    normalized.

    Raises:
    * `ConfigError`: If no panel is dated on or before `when`.
    """

    in_force = None
    for effective, panel in history:
        if effective > when:
            break
        in_force = panel
    if in_force is None:
        raise ConfigError(
            f'No score panel is in force on {when.isoformat()}; the first one '
            f'starts {history.dates[0].isoformat()}.'
        )

    if agencies is not None:
        in_force = in_force.restrict(agencies)
    if asset_ids is not None:
        in_force = in_force.align(asset_ids)
    return normalize(in_force, constant_fallback=constant_fallback)


def solve_strategy(
    spec: StrategySpec,
    window: Window,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """
    Returns the weights of one strategy in one window.

    Raises:
    * `SolverFailedError`, `InfeasibleError`: If the strategy's solve fails.
    * `InputError`: If the covariance doesn't suit the strategy.
    """

    sigma, mu = window.moments.sigma, window.moments.mu
    kind = spec.kind

    if kind is StrategyKind.EW:
        return equally_weighted(len(mu))
    if kind is StrategyKind.GMIN_V:
        return gmin_variance(sigma, settings)
    if kind is StrategyKind.RP:
        return risk_parity(sigma)
    if kind is StrategyKind.MDP:
        return most_diversified(sigma, settings)
    if kind is StrategyKind.MV_ESG:
        mu_bar, eta_bar = window.esg_target(
            spec.agency, spec.target_alpha, spec.target_fraction, settings
        )
        return mv_esg(
            sigma, mu, window.scores.esg_row(spec.agency), mu_bar, eta_bar, settings
        )

    target = window.kworst_target(
        spec.k, spec.target_alpha, spec.target_fraction, settings
    )
    instance = window.instance(spec.k)
    return solve_weights(
        build_epsilon_constraint(instance, target.mu_bar, target.gamma_bar),
        spec.name,
        instance.n,
        settings,
    )


class StrategyRun:
    """
    One strategy's backtest.

    Attributes:
    * name (`str`): The strategy name.
    * rebalance_dates (`list[datetime.date]`): When it rebalanced.
    * weights (`np.ndarray`): The `Q x n` weight history, one row per
        rebalance.
    * returns (`np.ndarray`): The out-of-sample daily returns.
    * diagnostics (`list[WindowDiagnostic]`): One per rebalance.
    * wealth (property `np.ndarray`): `W_0 = 1` followed by
        `W_t = W_{t-1} (1 + R_t)`.
    """

    __slots__ = ('name', 'rebalance_dates', 'weights', 'returns', 'diagnostics')

    def __init__(
        self,
        name: str,
        rebalance_dates: list[date],
        weights: np.ndarray,
        returns: np.ndarray,
        diagnostics: list[WindowDiagnostic],
    ):
        self.name = name
        self.rebalance_dates = rebalance_dates
        self.weights = weights
        self.returns = returns
        self.diagnostics = diagnostics

    def __repr__(self) -> str:
        return f'StrategyRun({self.name!r}, {len(self.rebalance_dates)} rebalances)'

    @property
    def wealth(self) -> np.ndarray:
        return np.concatenate([[1.0], np.cumprod(1 + self.returns)])


class BacktestReport:
    """
    The outcome of a backtest.

    Attributes:
    * asset_ids (`list[str]`): The assets, in weight column order.
    * dates (`list[datetime.date]`): The out-of-sample dates, one per return.
    * runs (`dict[str, StrategyRun]`): The runs, in roster order.
    * benchmark (`np.ndarray`): The benchmark's out-of-sample returns (the
        index column, or the equally weighted portfolio).
    * benchmark_name (`str`): The benchmark's name.

    Properties:
    * failures (`int`): How many strategy solves were replaced by held weights.
    """

    __slots__ = ('asset_ids', 'dates', 'runs', 'benchmark', 'benchmark_name')

    def __init__(
        self,
        asset_ids: list[str],
        dates: list[date],
        runs: dict[str, StrategyRun],
        benchmark: np.ndarray,
        benchmark_name: str = 'EW',
    ):
        self.asset_ids = asset_ids
        self.dates = dates
        self.runs = runs
        self.benchmark = benchmark
        self.benchmark_name = benchmark_name

    def __repr__(self) -> str:
        return f'BacktestReport({list(self.runs)}, {len(self.dates)} days)'

    def __getitem__(self, name: str) -> StrategyRun:
        return self.runs[name]

    @property
    def failures(self) -> int:
        return sum(
            diagnostic.failed
            for run in self.runs.values()
            for diagnostic in run.diagnostics
        )


def _attempt(
    spec: StrategySpec, window: Window, settings: Optional[SolverSettings]
) -> tuple[Optional[np.ndarray], Optional[str]]:
    try:
        return solve_strategy(spec, window, settings), None
    except STRATEGY_FAILURES as exc:
        return None, str(exc)


def run(
    market: MarketData,
    scores: Optional[ScoreHistory],
    backtest: BacktestConfig,
    *,
    agencies: Optional[Sequence[str]] = None,
    settings: Optional[SolverSettings] = None,
) -> BacktestReport:
    """
    Runs the rolling time window backtest.

    Rebalances happen at return rows `L, L + p, L + 2p, ...` (`L` the
    in-sample length, `p` the period) while data remains; the last holding
    period is cut short at the end of the data. A strategy whose solve fails
    keeps its previous weights (equal weights in the first window), and the
    event is logged and recorded in its diagnostics.

    Arguments:
    * market (`MarketData`): The prices.
    * scores (optional `ScoreHistory`): The score panels, needed by targeted
        strategies.
    * backtest (`BacktestConfig`): The protocol and strategies.
    * agencies (keyword-only optional `Sequence[str]`): The agency subset.
    * settings (keyword-only optional `SolverSettings`): The solver settings.

    Raises:
    * `InsufficientDataError`: If the data doesn't cover one full window.
    * `ConfigError`: If there are no strategies, or scores are missing.
    """

    if settings is None:
        settings = config.get_solver_settings()
    strategies = backtest.strategies
    length, period = backtest.in_sample_length, backtest.rebalance_period
    returns = market.returns

    if not strategies:
        raise ConfigError('A backtest needs at least one strategy.')
    if backtest.needs_scores and scores is None:
        raise ConfigError('The configured strategies need a score file.')
    if len(returns) < length + period:
        raise InsufficientDataError(
            f'{len(returns)} returns cannot hold a {length}-day in-sample window '
            f'and a {period}-day holding period.'
        )

    starts = list(range(length, len(returns), period))
    weights: dict[str, list[np.ndarray]] = {i.name: [] for i in strategies}
    held: dict[str, list[np.ndarray]] = {i.name: [] for i in strategies}
    diagnostics: dict[str, list[WindowDiagnostic]] = {i.name: [] for i in strategies}

    with futures.ThreadPoolExecutor(max_workers=backtest.workers) as executor:
        for number, start in enumerate(starts, start=1):
            when = market.dates[start]
            logger.info('Window %d of %d, rebalancing on %s.', number, len(starts), when)

            panel = None
            if backtest.needs_scores:
                panel = align_scores(
                    scores, when, asset_ids=market.asset_ids, agencies=agencies
                )
            window = Window(when, estimate_moments(market, (start - length, start)), panel)
            window.prepare(strategies, settings, executor)

            outcomes = executor.map(
                lambda spec: _attempt(spec, window, settings), strategies
            )
            hold = market.window_returns(start, min(start + period, len(returns)))
            for spec, (solved, message) in zip(strategies, outcomes):
                history = weights[spec.name]
                if solved is not None:
                    diagnostic = WindowDiagnostic(rebalance_date=when)
                elif history:
                    logger.warning(
                        '%s failed on %s, holding its previous weights: %s',
                        spec.name, when, message,
                    )
                    solved = history[-1]
                    diagnostic = WindowDiagnostic(
                        rebalance_date=when, status='carried-forward', message=message
                    )
                else:
                    logger.warning(
                        '%s failed in the first window (%s), holding equal '
                        'weights: %s',
                        spec.name, when, message,
                    )
                    solved = equally_weighted(market.n_assets)
                    diagnostic = WindowDiagnostic(
                        rebalance_date=when, status='equal-weight', message=message
                    )

                history.append(solved)
                held[spec.name].append(hold @ solved)
                diagnostics[spec.name].append(diagnostic)

    first = starts[0]
    rebalance_dates = [market.dates[i] for i in starts]
    runs = {
        spec.name: StrategyRun(
            spec.name,
            rebalance_dates,
            np.vstack(weights[spec.name]),
            np.concatenate(held[spec.name]),
            diagnostics[spec.name],
        )
        for spec in strategies
    }

    index = market.index_returns
    if index is None:
        benchmark, name = returns[first:] @ equally_weighted(market.n_assets), 'EW'
    else:
        benchmark, name = index[first:], market.index_id
    return BacktestReport(
        list(market.asset_ids),
        market.dates[first + 1 :],
        runs,
        benchmark,
        name,
    )


def save_report(report: BacktestReport, uow: OutputUOW) -> None:
    """
    Stages a report in `uow`: `returns_<strategy>.csv` (date, return, wealth),
    `weights_<strategy>.csv` (date, one column per asset),
    `diagnostics_<strategy>.csv` and `benchmark.csv`, with the roster in the
    manifest.
    """

    dates = [i.isoformat() for i in report.dates]
    for name, strategy in report.runs.items():
        uow.artifacts.add_table(
            f'returns_{name}',
            pd.DataFrame(
                {
                    'date': dates,
                    'return': strategy.returns,
                    'wealth': strategy.wealth[1:],
                }
            ),
        )
        weights = pd.DataFrame(strategy.weights, columns=report.asset_ids)
        weights.insert(0, 'date', [i.isoformat() for i in strategy.rebalance_dates])
        uow.artifacts.add_table(f'weights_{name}', weights)
        uow.artifacts.add_table(
            f'diagnostics_{name}',
            pd.DataFrame(
                [
                    [i.rebalance_date.isoformat(), i.status, i.message or '']
                    for i in strategy.diagnostics
                ],
                columns=['date', 'status', 'message'],
            ),
        )

    uow.artifacts.add_table(
        'benchmark', pd.DataFrame({'date': dates, 'return': report.benchmark})
    )
    uow.manifest.update(
        {
            'strategies': list(report.runs),
            'asset_ids': report.asset_ids,
            'benchmark': report.benchmark_name,
            'failures': report.failures,
        }
    )


def _numbers(frame: pd.DataFrame, columns) -> np.ndarray:
    return np.array(
        [[parse_cell(cell) for cell in row] for row in frame[columns].itertuples(index=False)],
        dtype=float,
    ).reshape(len(frame), -1)


def load_report(directory: str) -> BacktestReport:
    """
    Reads a report directory written by `save_report`.

    Raises:
    * `ParseError`: If a table is missing or malformed.
    """

    uow = OutputUOW(directory=directory)
    try:
        manifest = uow.read_manifest()
    except FileNotFoundError as exc:
        raise ParseError(f'{directory} has no report manifest.') from exc

    def table(name: str) -> pd.DataFrame:
        frame = uow.artifacts.get_table(name)
        if frame is None:
            raise ParseError(f'{directory} has no {name}.csv.')
        return frame

    asset_ids = manifest['asset_ids']
    benchmark = table('benchmark')
    dates = [date.fromisoformat(i) for i in benchmark['date']]

    runs = {}
    for name in manifest['strategies']:
        returns = table(f'returns_{name}')
        weights = table(f'weights_{name}')
        diagnostics = table(f'diagnostics_{name}')
        runs[name] = StrategyRun(
            name,
            [date.fromisoformat(i) for i in weights['date']],
            _numbers(weights, asset_ids),
            _numbers(returns, ['return'])[:, 0],
            [
                WindowDiagnostic(
                    rebalance_date=date.fromisoformat(row.date),
                    status=row.status,
                    message=row.message or None,
                )
                for row in diagnostics.itertuples(index=False)
            ],
        )

    return BacktestReport(
        asset_ids,
        dates,
        runs,
        _numbers(benchmark, ['return'])[:, 0],
        manifest.get('benchmark', 'EW'),
    )
