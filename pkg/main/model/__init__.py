"""
kworst/main/model

This package contains the data models, the configuration and the errors.

Models:
* MarketData: Dated prices and their returns.
* MomentEstimate: The mean vector and covariance of a return window.
* ScorePanel, NonEsgPanel: Raw and normalized agency scores.
* ScoreHistory: Score panels by the date they come into force.

Value Models:
* AgencyScale: An agency's native score range and orientation.
* StrategySpec, BacktestConfig: The compared strategies and the backtest.
* RunConfig, FrontierConfig, SynthConfig: A command's configuration.
* SolverSettings: The QP solver settings.

Enums:
* Orientation: Which end of an agency's scale is greener.
* StrategyKind: The strategy families.
"""

from . import config
from .config import SolverSettings
from .errors import (
    ConfigError,
    DegenerateRowError,
    InfeasibleError,
    InputError,
    InsufficientDataError,
    InvalidArgumentError,
    ParseError,
    ShapeError,
    SolverFailedError,
    UndefinedCorrelationError,
)
from .market import MarketData, MomentEstimate, check_psd
from .panel import AgencyScale, NonEsgPanel, Orientation, ScoreHistory, ScorePanel
from .run import FrontierConfig, RunConfig, SynthConfig, load_run_config
from .strategy import BacktestConfig, StrategyKind, StrategySpec

# in alphabetical order
__all__ = [
    'AgencyScale',
    'BacktestConfig',
    'ConfigError',
    'DegenerateRowError',
    'FrontierConfig',
    'InfeasibleError',
    'InputError',
    'InsufficientDataError',
    'InvalidArgumentError',
    'MarketData',
    'MomentEstimate',
    'NonEsgPanel',
    'Orientation',
    'ParseError',
    'RunConfig',
    'ScoreHistory',
    'ScorePanel',
    'ShapeError',
    'SolverFailedError',
    'SolverSettings',
    'StrategyKind',
    'StrategySpec',
    'SynthConfig',
    'UndefinedCorrelationError',
    'check_psd',
    'config',
    'load_run_config',
]
