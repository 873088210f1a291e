"""
kworst/main/model/market.py

Contains the market data models.

Models:
* MarketData: Dated adjusted prices of the investable assets, with their
    arithmetic returns and an optional benchmark index series.
* MomentEstimate: The mean vector and covariance matrix of a return window.
"""

from datetime import date
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, InsufficientDataError, ShapeError

PSD_TOLERANCE = 1e-10


class MarketData:
    """
    Represents the price history of a universe of assets.

    Arguments:
    * asset_ids (`Sequence[str]`): The tickers, in column order.
    * dates (`Sequence[datetime.date]`): The trading dates, strictly increasing.
    * prices (`np.ndarray`): A `T x n` matrix of strictly positive prices.
    * index_id (keyword-only optional `str`): The benchmark index name.
    * index_prices (keyword-only optional `np.ndarray`): The benchmark index
        price series, with one price per date.
    * dropped (keyword-only optional `Sequence[str]`): Assets removed while
        loading because of missing prices.

    Attributes:
    * asset_ids (`list[str]`): The tickers.
    * dates (`list[datetime.date]`): The trading dates.
    * prices (`np.ndarray`): The read-only price matrix.
    * returns (property `np.ndarray`): The `(T - 1) x n` arithmetic returns,
        `prices[t + 1] / prices[t] - 1`.
    * index_returns (property optional `np.ndarray`): The benchmark returns, or
        `None` when there is no benchmark column.
    * dropped (`list[str]`): The dropped assets.

    Methods:
    * slice (`MarketData` method): The market restricted to a range of dates.
    * window_returns (`np.ndarray` method): A row range of the returns.
    """

    __slots__ = (
        'asset_ids',
        'dates',
        'prices',
        'index_id',
        'index_prices',
        'dropped',
        '_returns',
    )

    def __init__(
        self,
        asset_ids: Sequence[str],
        dates: Sequence[date],
        prices: np.ndarray,
        *,
        index_id: Optional[str] = None,
        index_prices: Optional[np.ndarray] = None,
        dropped: Sequence[str] = (),
    ):
        self.asset_ids: list[str] = [str(i) for i in asset_ids]
        self.dates: list[date] = list(dates)
        self.prices = np.array(prices, dtype=float)
        self.index_id = index_id
        self.index_prices = (
            None
            if index_prices is None
            else np.array(index_prices, dtype=float)
        )
        self.dropped: list[str] = list(dropped)
        self._check()

        self.prices.setflags(write=False)
        self._returns = self.prices[1:] / self.prices[:-1] - 1
        self._returns.setflags(write=False)

    def _check(self) -> None:
        if self.prices.ndim != 2:
            raise ShapeError('Prices need to be a dates x assets matrix.')
        if self.prices.shape != (len(self.dates), len(self.asset_ids)):
            raise ShapeError(
                f'Price matrix is {self.prices.shape}, expected '
                f'{(len(self.dates), len(self.asset_ids))}.'
            )
        if len(self.dates) < 2:
            raise InsufficientDataError(
                'At least two dates are needed to compute returns.'
            )
        if not np.all(np.isfinite(self.prices)) or np.any(self.prices <= 0):
            raise InputError('Prices need to be finite and strictly positive.')
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise InputError('Dates need to be strictly increasing.')
        if self.index_prices is not None:
            if self.index_prices.shape != (len(self.dates),):
                raise ShapeError('The index needs one price per date.')
            if np.any(self.index_prices <= 0):
                raise InputError('Index prices need to be strictly positive.')

    def __repr__(self) -> str:
        return (
            f'MarketData({len(self.asset_ids)} assets, {len(self.dates)} dates, '
            f'{self.dates[0].isoformat()} to {self.dates[-1].isoformat()})'
        )

    @property
    def n_assets(self) -> int:
        """(`int`): The number of assets."""
        return len(self.asset_ids)

    @property
    def returns(self) -> np.ndarray:
        """
        (`np.ndarray`): The `(T - 1) x n` arithmetic returns. Row `t` is the
        return earned from `dates[t]` to `dates[t + 1]`.
        """
        return self._returns

    @property
    def index_returns(self) -> Optional[np.ndarray]:
        """
        (optional `np.ndarray`): The benchmark index returns, aligned with
        `returns`, or `None` if the market has no benchmark.
        """

        if self.index_prices is None:
            return None
        return self.index_prices[1:] / self.index_prices[:-1] - 1

    def window_returns(self, start: int, end: int) -> np.ndarray:
        """
        Returns the return rows `start` (inclusive) to `end` (exclusive).
        """

        if not 0 <= start < end <= len(self._returns):
            raise InsufficientDataError(
                f'Return window [{start}, {end}) is outside of the '
                f'{len(self._returns)} available rows.'
            )
        return self._returns[start:end]

    def slice(self, start: int, end: int) -> 'MarketData':
        """
        Returns the market restricted to the price rows `start` (inclusive)
        to `end` (exclusive).
        """

        return MarketData(
            self.asset_ids,
            self.dates[start:end],
            self.prices[start:end],
            index_id=self.index_id,
            index_prices=(
                None
                if self.index_prices is None
                else self.index_prices[start:end]
            ),
            dropped=self.dropped,
        )


def check_psd(matrix: np.ndarray, name: str = 'matrix') -> np.ndarray:
    """
    Checks that a matrix is symmetric positive semidefinite, returning a
    symmetrized copy. A smallest eigenvalue in `(-1e-10, 0)` is repaired by
    shifting the diagonal by `1e-10`; anything more negative is an input error.
    """

    matrix = np.array(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f'The {name} needs to be square.')
    if not np.all(np.isfinite(matrix)):
        raise InputError(f'The {name} has non-finite entries.')
    if matrix.size and np.max(np.abs(matrix - matrix.T)) > 1e-12 * max(
        1.0, np.max(np.abs(matrix))
    ):
        raise InputError(f'The {name} is not symmetric.')

    matrix = (matrix + matrix.T) / 2
    if matrix.size == 0:
        return matrix

    smallest = np.linalg.eigvalsh(matrix)[0]
    if smallest < -PSD_TOLERANCE:
        raise InputError(
            f'The {name} is not positive semidefinite (smallest eigenvalue '
            f'{smallest:.3e}).'
        )
    if smallest < 0:
        matrix = matrix + PSD_TOLERANCE * np.eye(len(matrix))
    return matrix


class MomentEstimate:
    """
    The first two sample moments of a window of returns.

    Arguments / Attributes:
    * mu (`np.ndarray`): The per-period expected returns.
    * sigma (`np.ndarray`): The per-period covariance matrix. Checked to be
        symmetric and positive semidefinite.
    * window (`tuple[int, int]`): The return rows `[start, end)` used.
    """

    __slots__ = ('mu', 'sigma', 'window')

    def __init__(
        self, mu: np.ndarray, sigma: np.ndarray, window: tuple[int, int]
    ):
        self.mu = np.array(mu, dtype=float)
        self.sigma = check_psd(sigma, 'covariance matrix')
        self.window = (int(window[0]), int(window[1]))

        if self.mu.shape != (len(self.sigma),):
            raise ShapeError('The mean vector and covariance disagree in size.')

    def __repr__(self) -> str:
        return f'MomentEstimate(n={len(self.mu)}, window={self.window})'
