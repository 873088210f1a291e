"""
kworst/main/ingest.py

Reading and writing price files, and estimating return moments.

Functions:
* load_prices: Reads a price CSV into `MarketData`.
* write_prices: Writes `MarketData` back into the price CSV format.
* estimate_moments: Sample mean and covariance over a window of returns.
"""

import logging
from datetime import date
from typing import Optional, Union

import numpy as np
import pandas as pd

from .model.errors import InsufficientDataError, ParseError
from .model.market import MarketData, MomentEstimate

logger = logging.getLogger(__name__)

DATE_COLUMN = 'date'


def _parse_dates(cells: pd.Series) -> list[date]:
    dates = []
    for row, cell in enumerate(cells, start=1):
        try:
            dates.append(date.fromisoformat(cell.strip()))
        except ValueError:
            raise ParseError(
                f'Malformed date {cell!r}', row=row, column=DATE_COLUMN
            ) from None

    for row, (before, after) in enumerate(zip(dates, dates[1:]), start=2):
        if after <= before:
            raise ParseError(
                f'Date {after.isoformat()} does not come after '
                f'{before.isoformat()}',
                row=row,
                column=DATE_COLUMN,
            )
    return dates


def _parse_prices(cells: pd.Series, column: str) -> np.ndarray:
    # empty cells become nan, everything else has to be a positive number
    parsed = np.full(len(cells), np.nan)
    for row, cell in enumerate(cells, start=1):
        cell = cell.strip()
        if not cell:
            continue
        try:
            value = float(cell)
        except ValueError:
            raise ParseError(
                f'Malformed price {cell!r}', row=row, column=column
            ) from None
        if not np.isfinite(value) or value <= 0:
            raise ParseError(
                f'Price {cell!r} is not strictly positive',
                row=row,
                column=column,
            )
        parsed[row - 1] = value
    return parsed


def load_prices(
    path: str,
    *,
    index_column: Optional[str] = None,
    start: Optional[date] = None,
    end: Optional[date] = None,
) -> MarketData:
    """
    Reads a price file into `MarketData`.

    The file is a UTF-8 CSV with the header `date,<ticker1>,<ticker2>,...`,
    ISO-8601 dates and `.` as the decimal point. Assets with any missing price
    inside the requested span are dropped and reported in `MarketData.dropped`.

    Arguments:
    * path (`str`): The price file.
    * index_column (keyword-only optional `str`): A column holding the
        benchmark index. It is kept out of the investable universe.
    * start, end (keyword-only optional `datetime.date`): The inclusive date
        span to keep. Defaults to the whole file.

    Returns:
    * market (`MarketData`): The validated prices.

    Raises:
    * `ParseError`: If a cell is malformed, naming its row and column.
    * `InsufficientDataError`: If fewer than two dates (or assets) remain.
    """

    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, encoding='UTF-8'
        )
    except pd.errors.ParserError as exc:
        raise ParseError(f'Malformed price file {path}: {exc}') from exc
    except pd.errors.EmptyDataError as exc:
        raise InsufficientDataError(f'Price file {path} is empty.') from exc

    if not len(frame.columns) or frame.columns[0].strip() != DATE_COLUMN:
        raise ParseError(
            f'The first column of {path} needs to be named {DATE_COLUMN!r}',
            row=0,
        )

    dates = _parse_dates(frame.iloc[:, 0])
    keep = np.array(
        [(start is None or d >= start) and (end is None or d <= end) for d in dates],
        dtype=bool,
    )
    dates = [d for d, k in zip(dates, keep) if k]
    if len(dates) < 2:
        raise InsufficientDataError(
            f'Only {len(dates)} date(s) in the requested span of {path}; '
            'at least 2 are needed.'
        )

    columns: dict[str, np.ndarray] = {}
    for column in frame.columns[1:]:
        columns[column.strip()] = _parse_prices(frame[column], column)[keep]

    index_prices = None
    if index_column is not None:
        try:
            index_prices = columns.pop(index_column)
        except KeyError:
            raise ParseError(
                f'Index column {index_column!r} not found in {path}'
            ) from None
        if np.any(np.isnan(index_prices)):
            raise InsufficientDataError(
                f'Index column {index_column!r} has missing prices.'
            )

    dropped = [name for name, values in columns.items() if np.any(np.isnan(values))]
    if dropped:
        logger.warning(
            'Dropping %d asset(s) with missing prices: %s',
            len(dropped),
            ', '.join(dropped),
        )
    kept = [name for name in columns if name not in dropped]
    if not kept:
        raise InsufficientDataError(f'No asset of {path} has complete prices.')

    return MarketData(
        kept,
        dates,
        np.column_stack([columns[name] for name in kept]),
        index_id=index_column,
        index_prices=index_prices,
        dropped=dropped,
    )


def write_prices(market: MarketData, path: str) -> None:
    """
    Writes the market back into the price file format. Prices are written with
    their shortest round-trip representation, so `load_prices` reproduces the
    matrices exactly.
    """

    frame = pd.DataFrame(market.prices, columns=market.asset_ids)
    if market.index_prices is not None:
        frame[market.index_id] = market.index_prices
    frame.insert(0, DATE_COLUMN, [d.isoformat() for d in market.dates])

    # repr() gives the shortest string that parses back to the same float
    for column in frame.columns[1:]:
        frame[column] = [repr(float(v)) for v in frame[column]]

    frame.to_csv(path, index=False, encoding='UTF-8', lineterminator='\n')


def estimate_moments(
    data: Union[MarketData, np.ndarray],
    window: Optional[tuple[int, int]] = None,
) -> MomentEstimate:
    """
    Estimates the mean vector and sample covariance (denominator: window
    length - 1) of the returns in `window`.

    Arguments:
    * data (`MarketData` or `np.ndarray`): The market, or a returns matrix.
    * window (optional `tuple[int, int]`): The return rows `[start, end)`.
        Defaults to every row.

    Returns:
    * moments (`MomentEstimate`): The per-period moments.

    Raises:
    * `InsufficientDataError`: If the window has fewer than two rows.
    """

    returns = data.returns if isinstance(data, MarketData) else np.asarray(data, dtype=float)
    if returns.ndim != 2:
        raise InsufficientDataError('Returns need to be a periods x assets matrix.')
    if window is None:
        window = (0, len(returns))

    start, end = window
    if end - start < 2 or start < 0 or end > len(returns):
        raise InsufficientDataError(
            f'Window [{start}, {end}) needs at least 2 of the '
            f'{len(returns)} available return rows.'
        )

    sample = returns[start:end]
    if end - start < sample.shape[1] + 1:
        logger.debug(
            'Window of %d rows is shorter than n + 1 = %d; the covariance is singular.',
            end - start,
            sample.shape[1] + 1,
        )

    mu = sample.mean(axis=0)
    centered = sample - mu
    sigma = centered.T @ centered / (len(sample) - 1)
    return MomentEstimate(mu, (sigma + sigma.T) / 2, (start, end))
