"""
kworst/main/scores.py

ESG score normalization, portfolio Non-ESG scores and rating disagreement.

Functions:
* normalize: Feature scales every agency row and turns it into Non-ESG scores.
* portfolio_score: The Non-ESG score an agency gives a portfolio.
* disagreement: Pairwise agency distances and their average.
* disagreement_table: `disagreement` for all four metrics at once.
* load_scores: Reads a score file and its agency sidecar into a `ScoreHistory`.
* write_scores: Writes a `ScoreHistory` back into the same two files.
"""

import logging
from datetime import date
from typing import Literal, Optional, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.spatial import distance

from .model import config
from .model.errors import (
    DegenerateRowError,
    InvalidArgumentError,
    ParseError,
    ShapeError,
    UndefinedCorrelationError,
)
from .model.panel import (
    AgencyScale,
    NonEsgPanel,
    Orientation,
    ScoreHistory,
    ScorePanel,
)

logger = logging.getLogger(__name__)

Metric = Literal['euclidean', 'chebychev', 'cosine', 'correlation']
METRICS: tuple[Metric, ...] = ('euclidean', 'chebychev', 'cosine', 'correlation')
ASSET_GAP_COLUMNS = ['asset_id', 'agency_a', 'agency_b', 'gap']

# distances that grow with the score scale, so the x100 column differs
_SCALED_METRICS = ('euclidean', 'chebychev')
_DISTANCES = {
    'euclidean': distance.euclidean,
    'chebychev': distance.chebyshev,
    'cosine': distance.cosine,
    'correlation': distance.correlation,
}


def normalize(
    panel: ScorePanel, *, constant_fallback: Optional[bool] = None
) -> NonEsgPanel:
    """
    Turns raw agency scores into Non-ESG scores.

    Every agency row is feature scaled across assets to
    `(e - min_j e) / (max_j e - min_j e)`. Rows of greener-is-higher agencies
    are then complemented, so that in every row the lower the score, the
    greener the asset.

    Arguments:
    * panel (`ScorePanel`): The raw scores.
    * constant_fallback (keyword-only optional `bool`): If a constant row is
        mapped to `0.5` instead of raising. Defaults to the package setting,
        which is off.

    Returns:
    * scores (`NonEsgPanel`): The Non-ESG scores.

    Raises:
    * `DegenerateRowError`: If an agency gives every asset the same score and
        the fallback is off.
    """

    if constant_fallback is None:
        constant_fallback = config.get_constant_row_fallback()

    rows = []
    for row, scale in zip(panel.raw, panel.scales):
        low, high = row.min(), row.max()
        if high == low:
            if not constant_fallback:
                raise DegenerateRowError(
                    f'Agency {scale.agency!r} scores every asset {low}; '
                    'its row cannot be feature scaled.'
                )
            logger.warning(
                'Agency %r has a constant row, using Non-ESG score 0.5.',
                scale.agency,
            )
            rows.append(np.full(len(row), 0.5))
            continue

        scaled = (row - low) / (high - low)
        if scale.orientation is Orientation.HIGHER:
            rows.append(1 - scaled)
        else:
            rows.append(scaled)

    return NonEsgPanel(panel.agency_ids, panel.asset_ids, np.vstack(rows))


def portfolio_score(s_i: np.ndarray, x: np.ndarray) -> float:
    """
    Returns the Non-ESG score `s_i . x` that one agency gives the portfolio
    with weights `x`.

    Raises:
    * `ShapeError`: If the two vectors differ in length.
    """

    s_i = np.asarray(s_i, dtype=float)
    x = np.asarray(x, dtype=float)
    if s_i.ndim != 1 or s_i.shape != x.shape:
        raise ShapeError(
            f'Score vector {s_i.shape} and weights {x.shape} do not match.'
        )
    return float(s_i @ x)


class DisagreementReport:
    """
    Pairwise distances between agency rows for one metric.

    Attributes:
    * metric (`str`): The distance used.
    * agency_ids (`list[str]`): The agencies, in matrix order.
    * matrix (`np.ndarray`): The symmetric `m x m` distances with a zero
        diagonal. Undefined pairs are `nan`.
    * undefined_pairs (`list[tuple[str, str]]`): Pairs the metric isn't
        defined for (a zero-variance row for correlation, a zero row for cosine).
    * scores (`np.ndarray`): The `m x n` rows that were compared.
    * asset_ids (`list[str]`): The assets, in column order.
    * average (optional `float`): The mean over the defined unordered pairs.
    * average_100 (optional `float`): The average on a 0-100 score scale.

    Methods:
    * pairs (`list[tuple[str, str, float]]` method): Every unordered pair.
    * asset_gaps (`pd.DataFrame` method): `|s_i - s_k|` per asset and pair.
    * raise_for_undefined (method): Raises if any pair is undefined.
    """

    __slots__ = ('metric', 'agency_ids', 'matrix', 'undefined_pairs', 'scores', 'asset_ids')

    def __init__(
        self,
        metric: str,
        agency_ids: list[str],
        matrix: np.ndarray,
        undefined_pairs: list[tuple[str, str]],
        scores: np.ndarray,
        asset_ids: list[str],
    ):
        self.metric = metric
        self.agency_ids = agency_ids
        self.matrix = matrix
        self.undefined_pairs = undefined_pairs
        self.scores = scores
        self.asset_ids = asset_ids

    def pairs(self) -> list[tuple[str, str, float]]:
        """Returns `(agency_a, agency_b, distance)` for every unordered pair."""

        m = len(self.agency_ids)
        return [
            (self.agency_ids[i], self.agency_ids[k], float(self.matrix[i, k]))
            for i in range(m)
            for k in range(i + 1, m)
        ]

    def asset_gaps(self) -> pd.DataFrame:
        """
        Returns the long table `asset_id, agency_a, agency_b, gap` of
        `|s_a - s_b|` for every asset and unordered agency pair, asset-major.
        """

        m = len(self.agency_ids)
        pairs = [(i, k) for i in range(m) for k in range(i + 1, m)]
        return pd.DataFrame(
            [
                [
                    asset,
                    self.agency_ids[i],
                    self.agency_ids[k],
                    float(abs(self.scores[i, j] - self.scores[k, j])),
                ]
                for j, asset in enumerate(self.asset_ids)
                for i, k in pairs
            ],
            columns=ASSET_GAP_COLUMNS,
        )

    @property
    def average(self) -> Optional[float]:
        """
        (optional `float`): The mean distance over the defined unordered pairs,
        or `None` if no pair is defined.
        """

        values = [d for _, _, d in self.pairs() if not np.isnan(d)]
        if not values:
            return None
        return float(np.mean(values))

    @property
    def average_100(self) -> Optional[float]:
        """
        (optional `float`): The average as if scores ran from 0 to 100.
        """

        if self.average is None or self.metric not in _SCALED_METRICS:
            return self.average
        return 100 * self.average

    def raise_for_undefined(self) -> None:
        """
        Raises `UndefinedCorrelationError` naming the first undefined pair.
        """

        if self.undefined_pairs:
            a, b = self.undefined_pairs[0]
            raise UndefinedCorrelationError(
                f'{self.metric} distance between {a!r} and {b!r} is undefined '
                '(a row has no variation).'
            )


def _is_undefined(metric: str, u: np.ndarray, v: np.ndarray) -> bool:
    if metric == 'correlation':
        return bool(np.ptp(u) == 0 or np.ptp(v) == 0)
    if metric == 'cosine':
        return bool(not np.any(u) or not np.any(v))
    return False


def disagreement(
    panel: Union[NonEsgPanel, np.ndarray],
    metric: Metric,
    *,
    agency_ids: Optional[list[str]] = None,
    asset_ids: Optional[list[str]] = None,
) -> DisagreementReport:
    """
    Measures how far apart the agencies' score rows are.

    Arguments:
    * panel (`NonEsgPanel` or `np.ndarray`): The scores, one row per agency.
        A bare matrix is accepted for raw-scale comparisons.
    * metric (`str`): One of `euclidean`, `chebychev`, `cosine` (1 - cosine
        similarity) or `correlation` (1 - Pearson correlation).
    * agency_ids, asset_ids (keyword-only optional `list[str]`): Row and
        column names for a bare matrix. Default to the panel's ids.

    Returns:
    * report (`DisagreementReport`): The matrix, its pair average and the
        per-asset gaps.

    Raises:
    * `InvalidArgumentError`: If the metric is unknown or there are fewer than
        two agencies.
    """

    if metric not in _DISTANCES:
        raise InvalidArgumentError(
            f'Unknown metric {metric!r}, expected one of {", ".join(METRICS)}.'
        )

    if isinstance(panel, NonEsgPanel):
        rows = panel.s
        agency_ids = list(panel.agency_ids)
        asset_ids = list(panel.asset_ids)
    else:
        rows = np.asarray(panel, dtype=float)
        if agency_ids is None:
            agency_ids = [str(i) for i in range(len(rows))]
        if asset_ids is None:
            asset_ids = [str(j) for j in range(rows.shape[-1])]

    m = len(rows)
    if m < 2:
        raise InvalidArgumentError('Disagreement needs at least two agencies.')

    matrix = np.zeros((m, m))
    undefined = []
    for i in range(m):
        for k in range(i + 1, m):
            if _is_undefined(metric, rows[i], rows[k]):
                matrix[i, k] = matrix[k, i] = np.nan
                undefined.append((agency_ids[i], agency_ids[k]))
                continue
            # cosine and correlation can come out a rounding error below zero
            value = max(0.0, float(_DISTANCES[metric](rows[i], rows[k])))
            matrix[i, k] = matrix[k, i] = value

    return DisagreementReport(metric, agency_ids, matrix, undefined, rows, asset_ids)


def disagreement_table(
    panel: Union[NonEsgPanel, np.ndarray],
    *,
    agency_ids: Optional[list[str]] = None,
    asset_ids: Optional[list[str]] = None,
) -> dict[str, DisagreementReport]:
    """Returns the `disagreement` report of every metric, keyed by metric."""

    return {
        metric: disagreement(panel, metric, agency_ids=agency_ids, asset_ids=asset_ids)
        for metric in METRICS
    }


def _load_scales(meta_path: str) -> list[AgencyScale]:
    try:
        meta = pd.read_csv(meta_path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise ParseError(f'Malformed agency file {meta_path}: {exc}') from exc

    scales = []
    for row, info in enumerate(meta.to_dict('records'), start=1):
        try:
            scales.append(
                AgencyScale(
                    agency=info['agency'].strip(),
                    range_min=info['range_min'],
                    range_max=info['range_max'],
                    orientation=info['orientation'].strip().lower(),
                )
            )
        except (KeyError, ValidationError) as exc:
            raise ParseError(
                f'Malformed agency scale in {meta_path}: {exc}', row=row
            ) from exc
    return scales


def load_scores(path: str, meta_path: str) -> ScoreHistory:
    """
    Reads a score file into a `ScoreHistory`.

    The score file is a UTF-8 CSV `agency,asset,score` with an optional `date`
    column (ISO-8601) naming when each panel comes into force; without it the
    file is a single panel applying from the start. The sidecar is a CSV
    `agency,range_min,range_max,orientation`, orientation being `higher` or
    `lower`, and fixes the agency row order.

    Raises:
    * `ParseError`: If a cell is malformed, naming its row and column.
    * `ShapeError`: If an agency doesn't score every asset of a panel, or
        isn't declared in the sidecar.
    """

    scales = _load_scales(meta_path)
    by_agency = {i.agency: i for i in scales}

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise ParseError(f'Malformed score file {path}: {exc}') from exc

    for column in ('agency', 'asset', 'score'):
        if column not in frame.columns:
            raise ParseError(f'Score file {path} has no {column!r} column', row=0)

    records: dict[Optional[date], dict[tuple[str, str], float]] = {}
    for row, info in enumerate(frame.to_dict('records'), start=1):
        when = None
        if 'date' in frame.columns:
            try:
                when = date.fromisoformat(info['date'].strip())
            except ValueError:
                raise ParseError(
                    f'Malformed date {info["date"]!r}', row=row, column='date'
                ) from None
        try:
            score = float(info['score'])
        except ValueError:
            raise ParseError(
                f'Malformed score {info["score"]!r}', row=row, column='score'
            ) from None
        agency = info['agency'].strip()
        if agency not in by_agency:
            raise ShapeError(f'Agency {agency!r} is not declared in {meta_path}')
        records.setdefault(when, {})[(agency, info['asset'].strip())] = score

    panels = []
    for when, cells in records.items():
        agencies = [i.agency for i in scales if any(a == i.agency for a, _ in cells)]
        assets = list(dict.fromkeys(asset for _, asset in cells))
        missing = [
            f'{agency}/{asset}'
            for agency in agencies
            for asset in assets
            if (agency, asset) not in cells
        ]
        if missing:
            raise ShapeError(
                f'Panel {when or "(undated)"} is missing scores: {", ".join(missing[:10])}'
            )
        raw = np.array([[cells[(a, j)] for j in assets] for a in agencies])
        panels.append((when, ScorePanel([by_agency[a] for a in agencies], assets, raw)))

    return ScoreHistory(panels)


def write_scores(history: ScoreHistory, path: str, meta_path: str) -> None:
    """
    Writes a `ScoreHistory` as a dated score file plus its agency sidecar.
    """

    rows = []
    scales: dict[str, AgencyScale] = {}
    for when, panel in history:
        for scale, raw_row in zip(panel.scales, panel.raw):
            scales.setdefault(scale.agency, scale)
            for asset, score in zip(panel.asset_ids, raw_row):
                rows.append(
                    {
                        'date': when.isoformat(),
                        'agency': scale.agency,
                        'asset': asset,
                        'score': repr(float(score)),
                    }
                )

    pd.DataFrame(rows, columns=['date', 'agency', 'asset', 'score']).to_csv(
        path, index=False, lineterminator='\n'
    )
    pd.DataFrame([i.to_dict() for i in scales.values()]).to_csv(
        meta_path, index=False, lineterminator='\n'
    )
