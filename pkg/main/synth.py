"""
kworst/main/synth.py

Seeded synthetic markets and score panels, written in the ingest formats.

Returns follow a factor model: a market factor every asset loads on, a few
style factors and idiosyncratic noise, scaled so every asset has roughly the
configured daily volatility. Every asset has a latent greenness in [0, 1];
each agency sees it through its own noise, scaled by the disagreement level,
and reports it on its own native scale. With more than one agency, the last
one is a greener-is-lower risk rating.

Value Models:
* SynthMarket: The generated market, score history and target moments.

Functions:
* target_moments: The factor model's mean vector and covariance.
* generate: Draws a market and its score history.
* write_dataset: Writes a generated dataset to a directory.
"""

import logging
import os
from datetime import date
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from .ingest import write_prices
from .model.market import MarketData
from .model.panel import AgencyScale, Orientation, ScoreHistory, ScorePanel
from .model.run import SynthConfig
from .scores import write_scores

logger = logging.getLogger(__name__)

INDEX_ID = 'INDEX'
PRICES_FILE = 'prices.csv'
SCORES_FILE = 'scores.csv'
AGENCIES_FILE = 'agencies.csv'

# share of every asset's variance coming from the factors
FACTOR_SHARE = 0.6
VIEW_NOISE = 0.35
SCORE_DRIFT = 0.05
_HIGHER_RANGES = ((0.0, 100.0), (0.0, 10.0), (1.0, 7.0))
_LOWER_RANGE = (0.0, 50.0)


class SynthMarket(NamedTuple):
    """
    A generated dataset.

    Attributes:
    * market (`MarketData`): Prices, with an `INDEX` benchmark if configured.
    * scores (`ScoreHistory`): The agency panels.
    * mu (`np.ndarray`): The target daily mean returns.
    * sigma (`np.ndarray`): The target daily covariance.
    """

    market: MarketData
    scores: ScoreHistory
    mu: np.ndarray
    sigma: np.ndarray


def _loadings(rng: np.random.Generator, synth: SynthConfig) -> np.ndarray:
    loadings = np.empty((synth.n_assets, synth.n_factors))
    loadings[:, 0] = rng.normal(1.0, 0.2, synth.n_assets)
    loadings[:, 1:] = rng.normal(0.0, 0.5, (synth.n_assets, synth.n_factors - 1))
    norms = np.linalg.norm(loadings, axis=1, keepdims=True)
    return loadings / norms * np.sqrt(FACTOR_SHARE) * synth.daily_volatility


def target_moments(
    synth: SynthConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """
    Draws the factor model and returns its `(mu, sigma)`. The diagonal of
    `sigma` is exactly `daily_volatility ** 2`.
    """

    loadings = _loadings(rng, synth)
    idiosyncratic = (1 - FACTOR_SHARE) * synth.daily_volatility**2
    sigma = loadings @ loadings.T + idiosyncratic * np.eye(synth.n_assets)
    mu = synth.daily_return + rng.normal(
        0.0, abs(synth.daily_return) / 2, synth.n_assets
    )
    return mu, (sigma + sigma.T) / 2


def _scales(n_agencies: int) -> list[AgencyScale]:
    scales = []
    for i in range(n_agencies):
        if n_agencies > 1 and i == n_agencies - 1:
            low, high = _LOWER_RANGE
            orientation = Orientation.LOWER
        else:
            low, high = _HIGHER_RANGES[i % len(_HIGHER_RANGES)]
            orientation = Orientation.HIGHER
        scales.append(
            AgencyScale(
                agency=f'AG{i + 1}',
                range_min=low,
                range_max=high,
                orientation=orientation,
            )
        )
    return scales


def _panel(
    rng: np.random.Generator,
    greenness: np.ndarray,
    scales: list[AgencyScale],
    asset_ids: list[str],
    disagreement: float,
) -> ScorePanel:
    raw = np.empty((len(scales), len(greenness)))
    for i, scale in enumerate(scales):
        view = greenness + disagreement * rng.normal(0.0, VIEW_NOISE, len(greenness))
        view = np.clip(view, 0.0, 1.0)
        if scale.orientation is Orientation.LOWER:
            view = 1 - view
        raw[i] = scale.range_min + (scale.range_max - scale.range_min) * view
    return ScorePanel(scales, asset_ids, raw)


def _panel_dates(dates: list[date], frequency: str) -> list[Optional[date]]:
    if frequency == 'static':
        return [None]
    starts, seen = [], set()
    for d in dates:
        period = (d.year,) if frequency == 'yearly' else (d.year, d.month)
        if period not in seen:
            seen.add(period)
            starts.append(d)
    return starts


def generate(synth: Optional[SynthConfig] = None, seed: int = 0) -> SynthMarket:
    """
    Draws a synthetic market and its score history. The same configuration
    and seed always give the same dataset.

    Arguments:
    * synth (optional `SynthConfig`): The generator settings.
    * seed (`int`): The random seed.

    Returns:
    * dataset (`SynthMarket`): The market, scores and target moments.
    """

    synth = synth or SynthConfig()
    rng = np.random.default_rng(seed)

    mu, sigma = target_moments(synth, rng)
    width = len(str(synth.n_assets))
    asset_ids = [f'A{j + 1:0{width}d}' for j in range(synth.n_assets)]
    dates = [
        i.date()
        for i in pd.bdate_range(start=synth.start, periods=synth.n_dates)
    ]

    draws = rng.standard_normal((synth.n_dates - 1, synth.n_assets))
    returns = mu + draws @ np.linalg.cholesky(sigma).T
    returns = np.clip(returns, -0.95, None)
    prices = 100 * np.vstack(
        [np.ones(synth.n_assets), np.cumprod(1 + returns, axis=0)]
    )

    index_prices = None
    if synth.with_index:
        noise = rng.normal(0.0, synth.daily_volatility / 10, synth.n_dates - 1)
        index_returns = np.clip(returns.mean(axis=1) + noise, -0.95, None)
        index_prices = 100 * np.concatenate([[1.0], np.cumprod(1 + index_returns)])

    market = MarketData(
        asset_ids,
        dates,
        prices,
        index_id=INDEX_ID if synth.with_index else None,
        index_prices=index_prices,
    )

    scales = _scales(synth.n_agencies)
    greenness = rng.uniform(0.0, 1.0, synth.n_assets)
    panels = []
    for when in _panel_dates(dates, synth.score_frequency):
        if panels:
            greenness = np.clip(
                greenness + rng.normal(0.0, SCORE_DRIFT, synth.n_assets), 0.0, 1.0
            )
        panels.append(
            (when, _panel(rng, greenness, scales, asset_ids, synth.disagreement))
        )

    logger.info(
        'Generated %d assets over %d dates with %d score panel(s).',
        synth.n_assets,
        synth.n_dates,
        len(panels),
    )
    return SynthMarket(market, ScoreHistory(panels), mu, sigma)


def write_dataset(dataset: SynthMarket, directory: str) -> dict[str, str]:
    """
    Writes the prices, scores and agency sidecar of `dataset` into
    `directory`, returning the file paths by role (`prices`, `scores`,
    `score_meta`).
    """

    os.makedirs(directory, exist_ok=True)
    paths = {
        'prices': os.path.join(directory, PRICES_FILE),
        'scores': os.path.join(directory, SCORES_FILE),
        'score_meta': os.path.join(directory, AGENCIES_FILE),
    }
    write_prices(dataset.market, paths['prices'])
    write_scores(dataset.scores, paths['scores'], paths['score_meta'])
    return paths
