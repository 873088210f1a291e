import json

import pytest
from pydantic import ValidationError

from ..main.model import (
    BacktestConfig,
    ConfigError,
    RunConfig,
    SolverSettings,
    StrategyKind,
    StrategySpec,
    SynthConfig,
    config,
    load_run_config,
)


def test_package_defaults():
    assert config.get_grid_size() == (20, 20)
    assert config.get_in_sample_length() == 500
    assert config.get_rebalance_period() == 21
    assert config.get_roi_horizon() == 756
    assert config.get_target_alphas() == (0.0, 0.25, 0.5, 0.75)
    assert config.get_gamma_fraction() == 0.4
    assert config.get_constant_row_fallback() is False


def test_run_config_from_file(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(
        json.dumps(
            {
                'prices': 'prices.csv',
                'k': [2, 5],
                'backtest': {'in_sample_length': 250, 'rebalance_period': 5},
                'solver': {'max_iter': 1000},
            }
        )
    )
    run = load_run_config(str(path), out='elsewhere', seed=None)

    assert run.k == [2, 5]
    assert run.out == 'elsewhere'
    assert run.seed == 0
    assert run.backtest.in_sample_length == 250
    assert run.solver.max_iter == 1000
    assert run.solver.tol_feas == SolverSettings().tol_feas


def test_config_hash_is_stable():
    first, second = RunConfig(k=[2]), RunConfig(k=[2])

    assert first.config_hash() == second.config_hash()
    assert first.config_hash() != RunConfig(k=[3]).config_hash()


@pytest.mark.parametrize('text', ['{"k": [2]', '[1, 2]'])
def test_broken_config_files(tmp_path, text):
    path = tmp_path / 'run.json'
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_run_config(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / 'absent.json'))


@pytest.mark.parametrize(
    'data',
    [
        {'k': [0]},
        {'k': []},
        {'unknown': 1},
        {'backtest': {'in_sample_length': 1}},
        {'synth': {'score_frequency': 'weekly'}},
        {'synth': {'disagreement': 1.5}},
        {'solver': {'alpha': 2.5}},
    ],
)
def test_invalid_values(data):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(data)


def test_check_inputs(tmp_path):
    prices = tmp_path / 'prices.csv'
    prices.write_text('date,A\n')
    run = RunConfig(prices=str(prices))

    run.check_inputs('prices')
    with pytest.raises(ConfigError):
        run.check_inputs('scores')
    with pytest.raises(ConfigError):
        RunConfig(prices=str(tmp_path / 'absent.csv')).check_inputs('prices')


@pytest.mark.parametrize(
    'params',
    [
        {'kind': 'KWorst', 'profile': 1},
        {'kind': 'KWorst', 'k': 2},
        {'kind': 'MV-ESG', 'profile': 1},
        {'kind': 'MV-ESG', 'profile': 9, 'agency': 'AG1'},
    ],
)
def test_incomplete_strategies(params):
    with pytest.raises(ValidationError):
        StrategySpec(**params)


def test_strategy_targets():
    spec = StrategySpec(kind='KWorst', profile=3, k=2)

    assert spec.kind is StrategyKind.KWORST
    assert spec.name == 'Sust_3_2Worst'
    assert spec.target_alpha == 0.5
    assert spec.target_fraction == 0.4
    assert StrategySpec(kind='KWorst', profile=1, k=2, alpha=0.9).target_alpha == 0.9


def test_backtest_config_needs_scores():
    assert not BacktestConfig(strategies=[StrategySpec(kind='EW')]).needs_scores
    assert BacktestConfig(
        strategies=[StrategySpec(kind='MV-ESG', profile=1, agency='AG1')]
    ).needs_scores


def test_solver_settings_are_frozen():
    settings = SolverSettings()
    with pytest.raises(ValidationError):
        settings.rho = 2.0
    assert SynthConfig().n_assets == 50
