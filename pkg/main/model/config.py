"""
kworst/main/model/config.py

Contains all of the static and package-level configurable variables.

Constants:
* DATA_DIR: The directory holding the package settings file.
* SETTINGS_FILE: The file to read the package defaults from.

Models:
* SolverSettings: The tolerances and knobs of the quadratic program solver.
"""

import json
import pathlib
from typing import Any, Final

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

## files ##

# the data directory sits next to the `main` package
DATA_DIR: Final[pathlib.Path] = (
    pathlib.Path(__file__).resolve().parents[2] / 'data'
)
SETTINGS_FILE: Final[str] = (DATA_DIR / 'settings.json').as_posix()


class SolverSettings(BaseModel):
    """
    The solver settings of the quadratic program engine.

    Attributes / Arguments:
    * tol_feas (`float`): The largest accepted primal constraint violation.
    * tol_opt (`float`): The largest accepted stationarity, dual sign and
        complementarity residual.
    * max_iter (`int`): The iteration cap of a single solve.
    * rho (`float`): The starting ADMM penalty.
    * sigma (`float`): The proximal regularization of the primal update.
    * alpha (`float`): The over-relaxation factor, in (0, 2).
    * eps_admm (`float`): The scaled residual level at which polishing is
        first attempted. Tightened tenfold every time polishing fails.
    * eps_infeasible (`float`): The tolerance of the infeasibility certificates.
    * check_interval (`int`): Iterations between residual checks.
    * scaling_iters (`int`): Ruiz equilibration passes (`0` disables scaling).
    * adaptive_rho (`bool`): If the penalty adapts to the residual balance.
    * polish (`bool`): If the active-set polishing step runs.
    * interior_point (`bool`): If an interior point pass takes over when ADMM
        stops at the iteration cap.
    * attempts (`int`): How many times `solve_with_retries` tries a solve
        that stops at the iteration cap.
    """

    model_config = ConfigDict(frozen=True)

    tol_feas: PositiveFloat = 1e-8
    tol_opt: PositiveFloat = 1e-8
    max_iter: PositiveInt = 50_000
    rho: PositiveFloat = 0.1
    sigma: PositiveFloat = 1e-6
    alpha: float = Field(1.6, gt=0, lt=2)
    eps_admm: PositiveFloat = 1e-5
    eps_infeasible: PositiveFloat = 1e-6
    check_interval: PositiveInt = 25
    scaling_iters: int = Field(10, ge=0)
    adaptive_rho: bool = True
    polish: bool = True
    interior_point: bool = True
    attempts: PositiveInt = 2

    def escalate(self, attempt: int) -> 'SolverSettings':
        """
        Returns the settings used by retry number `attempt` (counting from
        `1`): the iteration cap doubles and the starting penalty grows tenfold
        per extra attempt.
        """

        if attempt <= 1:
            return self
        return self.model_copy(
            update={
                'max_iter': self.max_iter * 2 ** (attempt - 1),
                'rho': self.rho * 10 ** (attempt - 1),
            }
        )


def _get_setting(setting_name: str, default: Any) -> Any:
    """
    Internal method to get a setting from the setting config file.

    Arguments:
    * setting_name (`str`): The setting name of the desired setting getter.
    * default (`Any`): The value to return when the setting name isn't found.

    Returns:
    * setting (`Any`): The requested setting.
    """

    try:
        with open(SETTINGS_FILE, 'r', encoding='UTF-8') as f:
            settings: dict = json.load(f)
    except FileNotFoundError:
        return default

    return settings.pop(setting_name, default)


def get_solver_settings(**overrides: Any) -> SolverSettings:
    """
    Retrieves the configured solver settings, with any keyword overrides
    applied on top. Missing keys fall back to the `SolverSettings` defaults.
    """

    settings: dict = dict(_get_setting('solver', {}))
    settings.update(overrides)
    return SolverSettings(**settings)


def get_grid_size() -> tuple[int, int]:
    """
    Retrieves the default frontier grid as `(n_mu, n_gamma)`.
    Defaults to 20 by 20.
    """

    n_mu, n_gamma = _get_setting('frontier_grid', [20, 20])
    return int(n_mu), int(n_gamma)


def get_in_sample_length() -> int:
    """
    Retrieves the in-sample window length in observations. Defaults to `500`
    (two years of trading days).
    """
    return int(_get_setting('in_sample_length', 500))


def get_rebalance_period() -> int:
    """
    Retrieves the trading days in a rebalancing "financial month".
    Defaults to `21`.
    """
    return int(_get_setting('rebalance_period', 21))


def get_roi_horizon() -> int:
    """
    Retrieves the ROI horizon in trading days. Defaults to `756`, three years.
    """
    return int(_get_setting('roi_horizon', 756))


def get_holding_threshold() -> float:
    """
    Retrieves the weight above which an asset counts as held.
    Defaults to `1e-6`.
    """
    return float(_get_setting('holding_threshold', 1e-6))


def get_gamma_fraction() -> float:
    """
    Retrieves where the score target sits inside its interval, as a fraction
    from the minimum. Defaults to `0.4` (the "2/5" intermediate level).
    """
    return float(_get_setting('gamma_fraction', 0.4))


def get_target_alphas() -> tuple[float, ...]:
    """
    Retrieves the return target levels as fractions of the return range.
    Defaults to `(0, 1/4, 1/2, 3/4)`.
    """
    return tuple(
        float(i) for i in _get_setting('target_alphas', [0.0, 0.25, 0.5, 0.75])
    )


def get_constant_row_fallback() -> bool:
    """
    Retrieves if constant agency rows are mapped to Non-ESG score `0.5`
    instead of raising. Defaults to `False`.
    """
    return bool(_get_setting('constant_row_fallback', False))


def get_workers() -> int:
    """
    Retrieves the thread pool size used for fan-out. Defaults to `4`.
    """
    return int(_get_setting('workers', 4))
