"""
kworst/main/model/strategy.py

The portfolio strategies a backtest compares, and the backtest settings.

Enums:
* StrategyKind: The strategy families.

Value Models:
* StrategySpec: One strategy with its parameters.
* BacktestConfig: The rolling window protocol and the strategies to run.
"""

from enum import Enum
from typing import Literal, Optional

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveInt,
    field_validator,
    model_validator,
)

from . import config


class StrategyKind(Enum):
    """
    The strategy families.

    Attributes:
    * `GMIN_V`: Global Minimum Variance. Maps to `"GMinV"`.
    * `EW`: Equally Weighted. Maps to `"EW"`.
    * `RP`: Risk Parity (equal risk contributions). Maps to `"RP"`.
    * `MDP`: Most Diversified Portfolio. Maps to `"MDP"`.
    * `MV_ESG`: Mean-variance with one agency's ESG floor. Maps to `"MV-ESG"`.
    * `KWORST`: Mean-variance with a k-Worst Non-ESG ceiling. Maps to
        `"KWorst"`.
    """

    GMIN_V = 'GMinV'
    EW = 'EW'
    RP = 'RP'
    MDP = 'MDP'
    MV_ESG = 'MV-ESG'
    KWORST = 'KWorst'


class StrategySpec(BaseModel):
    """
    A frozen model of one strategy.

    Attributes / Arguments:
    * kind (`StrategyKind`): The family. Accepts the string values.
    * profile (optional `int`): The 1-based target profile of `MV-ESG` and
        `KWorst`: which of the configured return levels it aims for.
    * agency (optional `str`): The agency whose ESG floor `MV-ESG` uses.
    * k (optional `int`): The `k` of a `KWorst` strategy.
    * alpha (optional `float`): Overrides the profile's return level, as a
        fraction of the return range.
    * fraction (optional `float`): Overrides where the ESG / score target
        sits inside its interval.

    Properties:
    * name (`str`): The table name: `GMinV`, `EW`, `RP`, `MDP`,
        `Sust_<profile>` or `Sust_<profile>_<k>Worst`.
    * target_alpha (`float`): The return level, as a fraction.
    * target_fraction (`float`): The ESG / score level, as a fraction.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    kind: StrategyKind
    profile: Optional[PositiveInt] = None
    agency: Optional[str] = None
    k: Optional[PositiveInt] = None
    alpha: Optional[float] = Field(None, ge=0, le=1)
    fraction: Optional[float] = Field(None, ge=0, le=1)

    @model_validator(mode='after')
    def check_params(self) -> 'StrategySpec':
        targeted = self.kind in (StrategyKind.MV_ESG, StrategyKind.KWORST)
        if targeted and self.profile is None:
            raise ValueError(f'A {self.kind.value} strategy needs a profile.')
        if self.kind is StrategyKind.MV_ESG and not self.agency:
            raise ValueError('An MV-ESG strategy needs an agency.')
        if self.kind is StrategyKind.KWORST and self.k is None:
            raise ValueError('A KWorst strategy needs k.')
        if self.profile is not None and self.alpha is None:
            if self.profile > len(config.get_target_alphas()):
                raise ValueError(
                    f'Profile {self.profile} has no configured return level.'
                )
        return self

    @property
    def name(self) -> str:
        if self.kind is StrategyKind.MV_ESG:
            return f'Sust_{self.profile}'
        if self.kind is StrategyKind.KWORST:
            return f'Sust_{self.profile}_{self.k}Worst'
        return self.kind.value

    @property
    def target_alpha(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return config.get_target_alphas()[self.profile - 1]

    @property
    def target_fraction(self) -> float:
        if self.fraction is not None:
            return self.fraction
        return config.get_gamma_fraction()


class BacktestConfig(BaseModel):
    """
    A frozen model of the rolling time window protocol.

    Attributes / Arguments:
    * in_sample_length (`int`): The return rows the moments are estimated on.
        Defaults to the package setting.
    * rebalance_period (`int`): The holding period between rebalances, in
        trading days. Defaults to the package setting.
    * strategies (`list[StrategySpec]`): The strategies to run. Names need to
        be unique.
    * score_alignment (`str`): How score panels meet rebalance dates. Only
        `"locf"` (the latest panel on or before the date) is supported.
    * workers (`int`): Threads used to solve the strategies of one window.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    in_sample_length: int = Field(
        default_factory=config.get_in_sample_length, ge=2
    )
    rebalance_period: int = Field(
        default_factory=config.get_rebalance_period, ge=1
    )
    strategies: list[StrategySpec] = Field(default_factory=list)
    score_alignment: Literal['locf'] = 'locf'
    workers: PositiveInt = Field(default_factory=config.get_workers)

    @field_validator('strategies')
    @classmethod
    def check_unique(cls, strategies: list[StrategySpec]) -> list[StrategySpec]:
        names = [i.name for i in strategies]
        duplicated = sorted({i for i in names if names.count(i) > 1})
        if duplicated:
            raise ValueError(f'Duplicated strategies: {", ".join(duplicated)}')
        return strategies

    @property
    def needs_scores(self) -> bool:
        """(`bool`): If any strategy uses agency scores."""
        return any(
            i.kind in (StrategyKind.MV_ESG, StrategyKind.KWORST)
            for i in self.strategies
        )
