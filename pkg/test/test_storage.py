import json

import numpy as np
import pandas as pd
import pytest

from ..main import __version__
from ..main.model import ParseError
from ..main.storage import UNDEFINED, OutputUOW, format_cell, parse_cell


@pytest.mark.parametrize(
    ('value', 'expected'),
    [
        (None, UNDEFINED),
        (float('nan'), UNDEFINED),
        (0.1, '0.1'),
        (np.float64(1 / 3), repr(1 / 3)),
        (np.int64(7), '7'),
        ('EW', 'EW'),
    ],
)
def test_format_cell(value, expected):
    assert format_cell(value) == expected


def test_parse_cell():
    assert parse_cell(UNDEFINED) is None
    assert parse_cell(format_cell(1 / 7)) == 1 / 7
    with pytest.raises(ParseError):
        parse_cell('abc')


def test_commit_writes_tables_and_manifest(tmp_path):
    directory = tmp_path / 'run'
    with OutputUOW(directory=str(directory), command='backtest', config_hash='abc') as uow:
        uow.artifacts.add_table('metrics', pd.DataFrame({'Approach': ['EW'], 'Sharpe': [None]}))
        uow.manifest['seed'] = 3
        uow.commit()

    manifest = json.loads((directory / 'manifest.json').read_text())
    assert manifest == {
        'command': 'backtest',
        'config_hash': 'abc',
        'files': ['metrics.csv'],
        'seed': 3,
        'version': __version__,
    }
    assert (directory / 'metrics.csv').read_text() == 'Approach,Sharpe\nEW,undefined\n'


def test_stored_tables_read_back_as_strings(tmp_path):
    with OutputUOW(directory=str(tmp_path)) as uow:
        uow.artifacts.add_table('t', pd.DataFrame({'x': [0.1, 2.5]}))
        uow.commit()

    again = OutputUOW(directory=str(tmp_path))
    frame = again.artifacts.get_table('t')
    assert list(frame['x']) == ['0.1', '2.5']
    assert again.artifacts.get_table('missing') is None
    assert again.read_manifest()['files'] == ['t.csv']


def test_failed_work_is_discarded(tmp_path):
    directory = tmp_path / 'never'
    with pytest.raises(RuntimeError):
        with OutputUOW(directory=str(directory)) as uow:
            uow.artifacts.add_table('t', pd.DataFrame({'x': [1.0]}))
            raise RuntimeError('boom')

    assert uow.artifacts.list() == []
    assert not directory.exists()
