"""
kworst/main/model/panel.py

The ESG score panel models.

Enums:
* Orientation: If an agency rates greener assets higher or lower.

Value Models:
* AgencyScale: An agency's native score range and orientation.

Models:
* ScorePanel: Raw agency x asset scores on each agency's native scale.
* NonEsgPanel: Normalized Non-ESG scores in [0, 1], lower is greener.
* ScoreHistory: Score panels indexed by the date they come into force.
"""

from datetime import date
from enum import Enum
from typing import Iterator, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import InputError, ShapeError


class Orientation(Enum):
    """
    How an agency's scale runs.

    Attributes:
    * `HIGHER`: Greener assets get higher scores (most ESG ratings).
        Maps to `"higher"`.
    * `LOWER`: Greener assets get lower scores (ESG risk ratings, where
        0 is the greenest). Maps to `"lower"`.
    """

    HIGHER = 'higher'
    LOWER = 'lower'


class AgencyScale(BaseModel):
    """
    A frozen model of an agency's native scale.

    Attributes / Arguments:
    * agency (`str`): The agency id.
    * range_min (`float`): The lowest score the agency can give.
    * range_max (`float`): The highest score the agency can give.
    * orientation (`Orientation`): Which end of the scale is greener. Accepts
        the strings `"higher"` and `"lower"`.
    """

    model_config = ConfigDict(frozen=True)

    agency: str
    range_min: float
    range_max: float
    orientation: Orientation

    @model_validator(mode='after')
    def check_range(self) -> 'AgencyScale':
        if not self.range_min < self.range_max:
            raise ValueError(
                f'Agency {self.agency!r} needs range_min < range_max.'
            )
        return self

    def to_dict(self) -> dict:
        """Dictionary representation of the scale for storage."""
        return {
            'agency': self.agency,
            'range_min': self.range_min,
            'range_max': self.range_max,
            'orientation': self.orientation.value,
        }


class ScorePanel:
    """
    The raw scores that `m` agencies give to `n` assets.

    Arguments:
    * scales (`Sequence[AgencyScale]`): One scale per agency, in row order.
    * asset_ids (`Sequence[str]`): The asset ids, in column order.
    * raw (`np.ndarray`): The `m x n` raw scores, each inside its agency's
        declared range.

    Attributes:
    * agency_ids (property `list[str]`): The agency ids in row order.
    * orientations (property `list[Orientation]`): The per-agency orientations.

    Methods:
    * align (`ScorePanel` method): Reorders the columns to a market's assets.
    * restrict (`ScorePanel` method): Keeps a subset of agencies.
    """

    __slots__ = ('scales', 'asset_ids', 'raw')

    def __init__(
        self,
        scales: Sequence[AgencyScale],
        asset_ids: Sequence[str],
        raw: np.ndarray,
    ):
        self.scales: list[AgencyScale] = list(scales)
        self.asset_ids: list[str] = [str(i) for i in asset_ids]
        self.raw = np.array(raw, dtype=float)

        if self.raw.shape != (len(self.scales), len(self.asset_ids)):
            raise ShapeError(
                f'Raw scores are {self.raw.shape}, expected '
                f'{(len(self.scales), len(self.asset_ids))}.'
            )
        if not self.asset_ids:
            raise ShapeError('A score panel needs at least one asset.')
        if not np.all(np.isfinite(self.raw)):
            raise InputError('Raw scores need to be finite.')
        for row, scale in zip(self.raw, self.scales):
            if row.min() < scale.range_min or row.max() > scale.range_max:
                raise InputError(
                    f'Scores of agency {scale.agency!r} fall outside of '
                    f'[{scale.range_min}, {scale.range_max}].'
                )

    def __repr__(self) -> str:
        return f'ScorePanel(agencies={self.agency_ids!r}, n={len(self.asset_ids)})'

    @property
    def agency_ids(self) -> list[str]:
        """(`list[str]`): The agency ids in row order."""
        return [i.agency for i in self.scales]

    @property
    def orientations(self) -> list[Orientation]:
        """(`list[Orientation]`): The orientation of every agency row."""
        return [i.orientation for i in self.scales]

    def align(self, asset_ids: Sequence[str]) -> 'ScorePanel':
        """
        Returns the panel with its columns in the order of `asset_ids`, dropping
        scored assets that aren't listed.

        Raises:
        * `ShapeError`: If any of `asset_ids` has no score.
        """

        position = {asset: j for j, asset in enumerate(self.asset_ids)}
        missing = [i for i in asset_ids if i not in position]
        if missing:
            raise ShapeError(f'No scores for asset(s): {", ".join(missing)}')
        columns = [position[i] for i in asset_ids]
        return ScorePanel(self.scales, asset_ids, self.raw[:, columns])

    def restrict(self, agencies: Sequence[str]) -> 'ScorePanel':
        """
        Returns the panel with only the rows of `agencies`, in that order.
        """

        position = {agency: i for i, agency in enumerate(self.agency_ids)}
        missing = [i for i in agencies if i not in position]
        if missing:
            raise ShapeError(f'Unknown agency(s): {", ".join(missing)}')
        rows = [position[i] for i in agencies]
        return ScorePanel(
            [self.scales[i] for i in rows], self.asset_ids, self.raw[rows]
        )


class NonEsgPanel:
    """
    Normalized Non-ESG scores: `s[i, j]` is in [0, 1] and the lower it is, the
    greener agency `i` considers asset `j`.

    Arguments / Attributes:
    * agency_ids (`Sequence[str]`): The agency ids, in row order.
    * asset_ids (`Sequence[str]`): The asset ids, in column order.
    * s (`np.ndarray`): The read-only `m x n` Non-ESG matrix.

    Methods:
    * row (`np.ndarray` method): One agency's Non-ESG row.
    * esg_row (`np.ndarray` method): One agency's normalized ESG row,
        greener-is-higher (the complement of its Non-ESG row).
    """

    __slots__ = ('agency_ids', 'asset_ids', 's')

    def __init__(
        self,
        agency_ids: Sequence[str],
        asset_ids: Sequence[str],
        s: np.ndarray,
    ):
        self.agency_ids: list[str] = list(agency_ids)
        self.asset_ids: list[str] = list(asset_ids)
        self.s = np.array(s, dtype=float)

        if self.s.shape != (len(self.agency_ids), len(self.asset_ids)):
            raise ShapeError('Non-ESG matrix does not match its ids.')
        if np.any(self.s < 0) or np.any(self.s > 1):
            raise InputError('Non-ESG scores need to be inside [0, 1].')
        self.s.setflags(write=False)

    def __repr__(self) -> str:
        return f'NonEsgPanel(agencies={self.agency_ids!r}, n={len(self.asset_ids)})'

    def row(self, agency: str) -> np.ndarray:
        """Returns the Non-ESG row of `agency`."""

        try:
            return self.s[self.agency_ids.index(agency)]
        except ValueError:
            raise ShapeError(f'Unknown agency {agency!r}') from None

    def esg_row(self, agency: str) -> np.ndarray:
        """Returns the normalized ESG row of `agency`, greener-is-higher."""
        return 1 - self.row(agency)


class ScoreHistory:
    """
    Score panels by the date they come into force. An undated panel applies
    from the beginning of time.

    Arguments:
    * panels (`Sequence[tuple[Optional[datetime.date], ScorePanel]]`): The
        dated panels, in any order. Dates need to be unique.

    Methods:
    * dates (`list[datetime.date]` property): The sorted effective dates.
    * Supports iterating over `(date, panel)` pairs in date order and `len()`.
    """

    __slots__ = ('_panels',)

    def __init__(self, panels: Sequence[tuple[Optional[date], ScorePanel]]):
        dated = [(date.min if d is None else d, p) for d, p in panels]
        dated.sort(key=lambda i: i[0])
        if not dated:
            raise ShapeError('A score history needs at least one panel.')
        if any(a[0] == b[0] for a, b in zip(dated, dated[1:])):
            raise InputError('Two score panels share the same date.')
        self._panels = dated

    def __iter__(self) -> Iterator[tuple[date, ScorePanel]]:
        return iter(self._panels)

    def __len__(self) -> int:
        return len(self._panels)

    @property
    def dates(self) -> list[date]:
        """(`list[datetime.date]`): The dates the panels come into force."""
        return [i[0] for i in self._panels]

    def latest(self) -> ScorePanel:
        """Returns the most recent panel."""
        return self._panels[-1][1]
