"""
kworst/main/model/run.py

The per-run configuration, read from the JSON file given to `--config`.

Value Models:
* FrontierConfig: Grid sizes of the efficient surface sweep.
* SynthConfig: Parameters of the synthetic market generator.
* RunConfig: Everything a command needs.

Functions:
* load_run_config: Reads and validates a run configuration file.
"""

import hashlib
import json
import os
from datetime import date
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator

from . import config
from .config import SolverSettings
from .errors import ConfigError
from .strategy import BacktestConfig


class FrontierConfig(BaseModel):
    """
    A frozen model of the surface sweep.

    Attributes / Arguments:
    * n_mu (`int`): Return levels. Defaults to the package grid.
    * n_gamma (`int`): Score levels per return level.
    * max_failed_share (`float`): The share of failed grid points above which
        `frontier` reports a partial failure. Defaults to `0.1`.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    n_mu: PositiveInt = Field(default_factory=lambda: config.get_grid_size()[0])
    n_gamma: PositiveInt = Field(default_factory=lambda: config.get_grid_size()[1])
    max_failed_share: float = Field(0.1, ge=0, le=1)


class SynthConfig(BaseModel):
    """
    A frozen model of a synthetic market.

    Attributes / Arguments:
    * n_assets (`int`): Investable assets.
    * n_dates (`int`): Price dates.
    * n_agencies (`int`): Rating agencies.
    * n_factors (`int`): Common return factors.
    * disagreement (`float`): Agency noise level in [0, 1]; `0` gives every
        agency the same view.
    * daily_return (`float`): The mean daily asset return.
    * daily_volatility (`float`): The typical daily asset volatility.
    * score_frequency (`str`): `"static"` for one undated panel, `"monthly"`
        or `"yearly"` for dated panels.
    * start (`datetime.date`): The first price date.
    * with_index (`bool`): If a market-cap-free benchmark `INDEX` column is
        written next to the assets.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    n_assets: PositiveInt = 50
    n_dates: int = Field(1500, ge=2)
    n_agencies: int = Field(4, ge=1)
    n_factors: PositiveInt = 3
    disagreement: float = Field(0.5, ge=0, le=1)
    daily_return: float = 4e-4
    daily_volatility: float = Field(0.015, gt=0)
    score_frequency: str = 'yearly'
    start: date = date(2015, 1, 1)
    with_index: bool = True

    @field_validator('score_frequency')
    @classmethod
    def check_frequency(cls, value: str) -> str:
        if value not in ('static', 'monthly', 'yearly'):
            raise ValueError('score_frequency is one of static, monthly, yearly.')
        return value


class RunConfig(BaseModel):
    """
    A frozen model of a run.

    Attributes / Arguments:
    * prices (optional `str`): The price file.
    * scores (optional `str`): The score file.
    * score_meta (optional `str`): The agency sidecar of the score file.
    * index_column (optional `str`): The benchmark column of the price file.
    * k (`list[int]`): The k-Worst parameters to run. Defaults to `[1]`.
    * agencies (optional `list[str]`): The agency subset. Defaults to all.
    * mv_esg_agency (optional `str`): The agency of the MV-ESG baselines.
        Defaults to the first agency.
    * frontier (`FrontierConfig`): The surface sweep.
    * backtest (`BacktestConfig`): The rolling window protocol. No strategies
        means the full comparison roster.
    * synth (`SynthConfig`): The synthetic market.
    * solver (`SolverSettings`): The solver settings.
    * out (`str`): The output directory.
    * seed (`int`): The synthetic data seed.

    Methods:
    * config_hash (`str` method): The SHA-256 of the canonical JSON of the
        configuration.
    * check_inputs (method): Raises if referenced input files are missing.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    prices: Optional[str] = None
    scores: Optional[str] = None
    score_meta: Optional[str] = None
    index_column: Optional[str] = None
    k: list[PositiveInt] = Field(default_factory=lambda: [1], min_length=1)
    agencies: Optional[list[str]] = None
    mv_esg_agency: Optional[str] = None
    frontier: FrontierConfig = Field(default_factory=FrontierConfig)
    backtest: BacktestConfig = Field(default_factory=BacktestConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    solver: SolverSettings = Field(default_factory=config.get_solver_settings)
    out: str = 'out'
    seed: int = 0

    def config_hash(self) -> str:
        canonical = json.dumps(
            self.model_dump(mode='json'), sort_keys=True, separators=(',', ':')
        )
        return hashlib.sha256(canonical.encode('UTF-8')).hexdigest()

    def check_inputs(self, *fields: str) -> None:
        """
        Raises `ConfigError` if any of the named path fields is unset or
        doesn't point to a file.
        """

        for field in fields:
            path = getattr(self, field)
            if path is None:
                raise ConfigError(f'The run configuration needs {field!r}.')
            if not os.path.isfile(path):
                raise ConfigError(f'{field} file {path!r} does not exist.')


def load_run_config(path: Optional[str] = None, **overrides: Any) -> RunConfig:
    """
    Reads a JSON run configuration. Keyword overrides that aren't `None`
    replace top-level keys (the command line flags). Without a path, only the
    overrides and defaults apply.

    Raises:
    * `ConfigError`: If the file is missing or isn't a JSON object.
    * `pydantic.ValidationError`: If a value is invalid.
    """

    data: dict = {}
    if path is not None:
        try:
            with open(path, 'r', encoding='UTF-8') as f:
                data = json.load(f)
        except FileNotFoundError as exc:
            raise ConfigError(f'Run configuration {path!r} not found.') from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f'Run configuration {path!r} is not JSON: {exc}') from exc
        if not isinstance(data, dict):
            raise ConfigError(f'Run configuration {path!r} needs to be an object.')

    data.update({key: value for key, value in overrides.items() if value is not None})
    return RunConfig.model_validate(data)
