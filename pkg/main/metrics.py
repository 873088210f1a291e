"""
kworst/main/metrics.py

Out-of-sample performance measures.

Every measure with a denominator that can vanish returns `None` ("undefined")
instead of a silent `nan` or `inf`. The risk-free rate is zero throughout.

Value Models:
* MetricRow: The measures of one strategy.
* RoiRow: The ROI summary of one strategy.

Models:
* MetricTable: A `MetricRow` per strategy, exported in table order.
* RoiTable: A `RoiRow` per strategy.

Functions:
* exp_ret, vol, sharpe, max_drawdown, ulcer, rachev10, turnover,
    jensen_alpha, info_ratio, var5, omega, avg_holdings: The measures.
* wealth_path, drawdowns, roi, roi_summary: Wealth based helpers.
* evaluate, roi_table: Whole-report tables.
"""

import math
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from .model import config
from .model.errors import InsufficientDataError, ShapeError

# denominators at or below this are treated as zero
ZERO = 1e-12
PERCENTILES = (5, 25, 50, 75, 95)

METRIC_COLUMNS = {
    'approach': 'Approach',
    'exp_ret': 'ExpRet',
    'vol': 'Vol',
    'sharpe': 'Sharpe',
    'mdd': 'MDD',
    'ulcer': 'Ulcer',
    'rachev10': 'Rachev10',
    'turn': 'Turn',
    'alpha_j': 'AlphaJ',
    'info_ratio': 'InfoRatio',
    'var5': 'VaR5',
    'omega': 'Omega',
    'ave_holdings': 'ave #',
}
ROI_COLUMNS = {
    'approach': 'Approach',
    'exp_ret': 'ExpRet',
    'vol': 'Vol',
    'p5': '5%-perc',
    'p25': '25%-perc',
    'p50': '50%-perc',
    'p75': '75%-perc',
    'p95': '95%-perc',
}


def _series(returns) -> np.ndarray:
    returns = np.asarray(returns, dtype=float).reshape(-1)
    if not len(returns):
        raise InsufficientDataError('No returns to measure.')
    return returns


def _pair(returns, index_returns) -> tuple[np.ndarray, np.ndarray]:
    returns, index_returns = _series(returns), _series(index_returns)
    if returns.shape != index_returns.shape:
        raise ShapeError('Returns and index returns differ in length.')
    return returns, index_returns


def exp_ret(returns) -> float:
    """The mean return."""
    return float(np.mean(_series(returns)))


def vol(returns) -> Optional[float]:
    """The sample standard deviation (denominator `L - 1`); `None` if `L < 2`."""

    returns = _series(returns)
    if len(returns) < 2:
        return None
    return float(np.std(returns, ddof=1))


def sharpe(returns) -> Optional[float]:
    """Mean over standard deviation; `None` when the volatility is zero."""

    deviation = vol(returns)
    if deviation is None or deviation <= ZERO:
        return None
    return exp_ret(returns) / deviation


def wealth_path(returns) -> np.ndarray:
    """Returns `W_0 = 1` followed by `W_t = W_{t-1} (1 + R_t)`."""
    return np.concatenate([[1.0], np.cumprod(1 + _series(returns))])


def drawdowns(wealth) -> np.ndarray:
    """
    Returns `DD_t = (W_t - max_{s <= t} W_s) / max_{s <= t} W_s` for
    `t = 1 ... T`. The running maximum includes `W_0`.
    """

    wealth = np.asarray(wealth, dtype=float)
    peaks = np.maximum.accumulate(wealth)
    return ((wealth - peaks) / peaks)[1:]


def max_drawdown(wealth) -> float:
    """The deepest drawdown, `<= 0`."""

    dd = drawdowns(wealth)
    return float(min(dd.min(initial=0.0), 0.0))


def ulcer(wealth) -> float:
    """The root mean square of the drawdowns."""

    dd = drawdowns(wealth)
    if not len(dd):
        return 0.0
    return float(np.sqrt(np.mean(dd**2)))


def rachev10(returns, level: float = 0.1) -> Optional[float]:
    """
    The Rachev ratio at `level` on both tails: the mean of the best
    `ceil(level L)` returns over minus the mean of the worst as many.
    `None` when the worst tail averages zero.

    Raises:
    * `InsufficientDataError`: Below 10 observations.
    """

    returns = np.sort(_series(returns))
    if len(returns) < 10:
        raise InsufficientDataError('The Rachev ratio needs 10 observations.')
    tail = math.ceil(level * len(returns) - 1e-9)
    worst = -np.mean(returns[:tail])
    if abs(worst) <= ZERO:
        return None
    return float(np.mean(returns[-tail:]) / worst)


def turnover(weights) -> float:
    """
    The mean total absolute weight change between consecutive rebalances.
    The initial funding isn't a trade, so a single rebalance has turnover 0.
    """

    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    if len(weights) < 2:
        return 0.0
    changes = np.abs(np.diff(weights, axis=0)).sum(axis=1)
    return float(changes.mean())


def jensen_alpha(returns, index_returns) -> Optional[float]:
    """
    `E[R] - beta E[R_I]` with `beta = Cov(R, R_I) / Var(R_I)`; `None` when the
    index doesn't vary.
    """

    returns, index_returns = _pair(returns, index_returns)
    if len(returns) < 2:
        return None
    centered = index_returns - index_returns.mean()
    variance = float(centered @ centered) / (len(returns) - 1)
    if variance <= ZERO**2:
        return None
    covariance = float((returns - returns.mean()) @ centered) / (len(returns) - 1)
    return float(returns.mean() - covariance / variance * index_returns.mean())


def info_ratio(returns, index_returns) -> Optional[float]:
    """The mean over the standard deviation of `R - R_I`; `None` without spread."""

    returns, index_returns = _pair(returns, index_returns)
    return sharpe(returns - index_returns)


def var5(returns, level: float = 0.05) -> float:
    """The `(floor(level L) + 1)`-th largest loss `-R`."""

    losses = np.sort(-_series(returns))[::-1]
    return float(losses[min(math.floor(level * len(losses) + 1e-9), len(losses) - 1)])


def omega(returns) -> Optional[float]:
    """`E[max(0, R)] / E[max(0, -R)]`; `None` without losses."""

    returns = _series(returns)
    losses = float(np.mean(np.maximum(-returns, 0.0)))
    if losses <= 0:
        return None
    return float(np.mean(np.maximum(returns, 0.0))) / losses


def avg_holdings(weights, threshold: Optional[float] = None) -> float:
    """
    The mean number of assets held above `threshold` per rebalance. The
    threshold defaults to the package setting.
    """

    if threshold is None:
        threshold = config.get_holding_threshold()
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    return float(np.mean(np.sum(weights > threshold, axis=1)))


def roi(wealth, horizon: Optional[int] = None) -> np.ndarray:
    """
    Returns `(W_t - W_{t-h}) / W_{t-h}` for `t = h + 1 ... T`, `h` the horizon
    (by default the package setting). Empty when the path is too short.
    """

    if horizon is None:
        horizon = config.get_roi_horizon()
    wealth = np.asarray(wealth, dtype=float)
    if horizon < 1:
        raise InsufficientDataError('The ROI horizon needs to be positive.')
    if len(wealth) <= horizon + 1:
        return np.zeros(0)
    return wealth[horizon + 1 :] / wealth[1 : len(wealth) - horizon] - 1


class RoiRow(BaseModel):
    """
    A frozen model of a strategy's ROI distribution.

    Attributes / Arguments:
    * approach (`str`): The strategy.
    * exp_ret, vol (optional `float`): The ROI mean and sample standard
        deviation.
    * p5, p25, p50, p75, p95 (optional `float`): ROI percentiles, linearly
        interpolated.
    """

    model_config = ConfigDict(frozen=True)

    approach: str
    exp_ret: Optional[float] = None
    vol: Optional[float] = None
    p5: Optional[float] = None
    p25: Optional[float] = None
    p50: Optional[float] = None
    p75: Optional[float] = None
    p95: Optional[float] = None


def roi_summary(approach: str, series: np.ndarray) -> RoiRow:
    """Summarizes an ROI series; every field is `None` for an empty one."""

    if not len(series):
        return RoiRow(approach=approach)
    percentiles = np.percentile(series, PERCENTILES, method='linear')
    return RoiRow(
        approach=approach,
        exp_ret=float(np.mean(series)),
        vol=float(np.std(series, ddof=1)) if len(series) > 1 else None,
        **{f'p{p}': float(v) for p, v in zip(PERCENTILES, percentiles)},
    )


class MetricRow(BaseModel):
    """
    A frozen model of one strategy's measures, named as in the exported table
    (`ExpRet`, `Vol`, `Sharpe`, `MDD`, `Ulcer`, `Rachev10`, `Turn`, `AlphaJ`,
    `InfoRatio`, `VaR5`, `Omega`, `ave #`). `None` is undefined.
    """

    model_config = ConfigDict(frozen=True)

    approach: str
    exp_ret: float
    vol: Optional[float]
    sharpe: Optional[float]
    mdd: float
    ulcer: float
    rachev10: Optional[float]
    turn: float
    alpha_j: Optional[float]
    info_ratio: Optional[float]
    var5: float
    omega: Optional[float]
    ave_holdings: float


class _Table:
    __slots__ = ('rows',)
    columns: dict[str, str] = {}

    def __init__(self, rows: list):
        self.rows = rows

    def __getitem__(self, approach: str):
        for row in self.rows:
            if row.approach == approach:
                return row
        raise KeyError(approach)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        """Returns the table with its exported headers, `None` kept as-is."""

        return pd.DataFrame(
            [[getattr(row, i) for i in self.columns] for row in self.rows],
            columns=list(self.columns.values()),
            dtype=object,
        )


class MetricTable(_Table):
    """The `MetricRow` of every strategy, in roster order."""

    __slots__ = ()
    columns = METRIC_COLUMNS


class RoiTable(_Table):
    """The `RoiRow` of every strategy, in roster order."""

    __slots__ = ()
    columns = ROI_COLUMNS


def _rachev(returns) -> Optional[float]:
    try:
        return rachev10(returns)
    except InsufficientDataError:
        return None


def evaluate(
    report, index_returns=None, *, threshold: Optional[float] = None
) -> MetricTable:
    """
    Measures every strategy of a `BacktestReport`. The benchmark defaults to
    the report's own.
    """

    if index_returns is None:
        index_returns = report.benchmark

    rows = []
    for name, run in report.runs.items():
        wealth = run.wealth
        rows.append(
            MetricRow(
                approach=name,
                exp_ret=exp_ret(run.returns),
                vol=vol(run.returns),
                sharpe=sharpe(run.returns),
                mdd=max_drawdown(wealth),
                ulcer=ulcer(wealth),
                rachev10=_rachev(run.returns),
                turn=turnover(run.weights),
                alpha_j=jensen_alpha(run.returns, index_returns),
                info_ratio=info_ratio(run.returns, index_returns),
                var5=var5(run.returns),
                omega=omega(run.returns),
                ave_holdings=avg_holdings(run.weights, threshold),
            )
        )
    return MetricTable(rows)


def roi_table(report, horizon: Optional[int] = None) -> RoiTable:
    """Summarizes every strategy's ROI over `horizon` days."""

    return RoiTable(
        [roi_summary(name, roi(run.wealth, horizon)) for name, run in report.runs.items()]
    )
