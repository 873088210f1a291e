import math
from datetime import date

import numpy as np
import pytest

from ..main.model import (
    AgencyScale,
    DegenerateRowError,
    InvalidArgumentError,
    NonEsgPanel,
    ParseError,
    ScoreHistory,
    ScorePanel,
    ShapeError,
    UndefinedCorrelationError,
)
from ..main.scores import (
    ASSET_GAP_COLUMNS,
    METRICS,
    disagreement,
    disagreement_table,
    load_scores,
    normalize,
    portfolio_score,
    write_scores,
)
from .oracles import euclidean_pairs


def scale(agency: str, orientation: str = 'higher', low=0.0, high=100.0) -> AgencyScale:
    return AgencyScale(
        agency=agency, range_min=low, range_max=high, orientation=orientation
    )


def panel(rows, orientations=None, assets=None) -> ScorePanel:
    rows = np.atleast_2d(np.array(rows, dtype=float))
    orientations = orientations or ['higher'] * len(rows)
    assets = assets or [f'A{j}' for j in range(rows.shape[1])]
    return ScorePanel(
        [scale(f'G{i}', o) for i, o in enumerate(orientations)], assets, rows
    )


@pytest.mark.parametrize(
    ('orientation', 'expected'),
    [('higher', [1.0, 0.5, 0.0]), ('lower', [0.0, 0.5, 1.0])],
)
def test_normalize_orientation(orientation, expected):
    scores = normalize(panel([[0, 50, 100]], [orientation]))
    assert np.allclose(scores.s[0], expected, atol=1e-15)


def test_normalize_matches_per_cell_formula():
    rng = np.random.default_rng(2)
    raw = rng.uniform(0, 100, (4, 10))
    orientations = ['higher', 'lower', 'higher', 'lower']
    scores = normalize(panel(raw, orientations))

    for i in range(4):
        low, high = min(raw[i]), max(raw[i])
        for j in range(10):
            scaled = (raw[i][j] - low) / (high - low)
            expected = 1 - scaled if orientations[i] == 'higher' else scaled
            assert abs(scores.s[i, j] - expected) <= 1e-15


def test_normalize_affine_invariant():
    rng = np.random.default_rng(8)
    raw = rng.uniform(10, 20, (2, 12))
    moved = 3.5 * raw - 20
    base = normalize(ScorePanel([scale('a', low=0, high=20), scale('b', low=0, high=20)], list('abcdefghijkl'), raw))
    again = normalize(ScorePanel([scale('a', low=-100, high=100), scale('b', low=-100, high=100)], list('abcdefghijkl'), moved))

    assert np.allclose(base.s, again.s, atol=1e-12)


def test_normalized_rows_span_unit_interval():
    scores = normalize(panel(np.random.default_rng(4).uniform(0, 100, (3, 8))))

    assert np.allclose(scores.s.min(axis=1), 0.0)
    assert np.allclose(scores.s.max(axis=1), 1.0)


def test_constant_row():
    constant = panel([[40, 40, 40], [0, 10, 20]])
    with pytest.raises(DegenerateRowError):
        normalize(constant, constant_fallback=False)

    scores = normalize(constant, constant_fallback=True)
    assert np.array_equal(scores.s[0], [0.5, 0.5, 0.5])


def test_scores_outside_declared_range():
    with pytest.raises(ValueError):
        panel([[0, 150]])


@pytest.mark.parametrize(
    ('x', 'expected'),
    [([1.0, 0.0], 0.2), ([0.5, 0.5], 0.5)],
)
def test_portfolio_score(x, expected):
    assert portfolio_score(np.array([0.2, 0.8]), np.array(x)) == pytest.approx(expected, abs=1e-15)


def test_portfolio_score_matches_loop_and_bounds():
    rng = np.random.default_rng(9)
    s = rng.uniform(0, 1, 20)
    x = rng.dirichlet(np.ones(20))

    assert portfolio_score(s, x) == pytest.approx(sum(a * b for a, b in zip(s, x)), abs=1e-15)
    assert s.min() - 1e-15 <= portfolio_score(s, x) <= s.max() + 1e-15


def test_portfolio_score_shape():
    with pytest.raises(ShapeError):
        portfolio_score(np.ones(3), np.ones(2) / 2)


def test_hand_distances():
    scores = NonEsgPanel(['a', 'b'], ['x', 'y'], np.array([[1.0, 0.0], [0.0, 1.0]]))

    euclidean = disagreement(scores, 'euclidean')
    assert euclidean.pairs() == [('a', 'b', pytest.approx(math.sqrt(2)))]
    assert euclidean.average_100 == pytest.approx(100 * math.sqrt(2))
    assert disagreement(scores, 'chebychev').average == pytest.approx(1.0)
    assert disagreement(scores, 'cosine').average == pytest.approx(1.0)
    assert disagreement(scores, 'correlation').average == pytest.approx(2.0)


def test_identical_rows():
    row = [0.1, 0.5, 0.9]
    reports = disagreement_table(NonEsgPanel(['a', 'b', 'c'], list('xyz'), np.array([row] * 3)))

    for metric in METRICS:
        assert reports[metric].average == pytest.approx(0.0, abs=1e-12)
        assert reports[metric].matrix.shape == (3, 3)


def test_constant_rows_flag_correlation():
    scores = NonEsgPanel(['a', 'b'], list('xyz'), np.array([[0.5] * 3, [0.5] * 3]))
    report = disagreement(scores, 'correlation')

    assert report.undefined_pairs == [('a', 'b')]
    assert report.average is None
    with pytest.raises(UndefinedCorrelationError):
        report.raise_for_undefined()


def test_distance_matrix_properties():
    rng = np.random.default_rng(12)
    scores = NonEsgPanel(list('abcd'), [str(j) for j in range(50)], rng.uniform(0, 1, (4, 50)))

    for metric in METRICS:
        matrix = disagreement(scores, metric).matrix
        assert np.allclose(matrix, matrix.T)
        assert np.allclose(np.diag(matrix), 0.0)

    for metric in ('euclidean', 'chebychev'):
        matrix = disagreement(scores, metric).matrix
        for i in range(4):
            for j in range(4):
                for k in range(4):
                    assert matrix[i, k] <= matrix[i, j] + matrix[j, k] + 1e-12

    assert disagreement(scores, 'euclidean').average == pytest.approx(euclidean_pairs(scores.s), abs=1e-12)


@pytest.mark.parametrize('metric', ['manhattan', ''])
def test_unknown_metric(metric):
    scores = NonEsgPanel(['a', 'b'], ['x'], np.array([[0.0], [1.0]]))
    with pytest.raises(InvalidArgumentError):
        disagreement(scores, metric)


def test_single_agency():
    with pytest.raises(InvalidArgumentError):
        disagreement(NonEsgPanel(['a'], ['x', 'y'], np.array([[0.0, 1.0]])), 'euclidean')


def test_asset_gaps_by_hand():
    scores = NonEsgPanel(
        ['a', 'b', 'c'], ['x', 'y'], np.array([[0.1, 0.9], [0.4, 0.9], [1.0, 0.0]])
    )
    gaps = disagreement(scores, 'euclidean').asset_gaps()

    assert list(gaps.columns) == ASSET_GAP_COLUMNS
    assert list(gaps['asset_id']) == ['x'] * 3 + ['y'] * 3
    assert list(zip(gaps['agency_a'], gaps['agency_b']))[:3] == [('a', 'b'), ('a', 'c'), ('b', 'c')]
    assert np.allclose(gaps['gap'], [0.3, 0.9, 0.6, 0.0, 0.9, 0.9])


def test_asset_gaps_match_the_distances():
    rng = np.random.default_rng(14)
    scores = NonEsgPanel(list('abcd'), [f'A{j}' for j in range(20)], rng.uniform(0, 1, (4, 20)))
    gaps = disagreement(scores, 'chebychev').asset_gaps()
    widest = gaps.groupby(['agency_a', 'agency_b'])['gap'].max()
    squared = gaps.assign(gap=gaps['gap'] ** 2).groupby(['agency_a', 'agency_b'])['gap'].sum()

    for a, b, value in disagreement(scores, 'chebychev').pairs():
        assert widest[(a, b)] == pytest.approx(value, abs=1e-12)
    for a, b, value in disagreement(scores, 'euclidean').pairs():
        assert math.sqrt(squared[(a, b)]) == pytest.approx(value, abs=1e-12)


def test_asset_gaps_of_a_bare_matrix():
    report = disagreement(np.array([[1.0, 5.0, 2.0], [3.0, 5.0, 0.0]]), 'cosine', agency_ids=['p', 'q'])
    gaps = report.asset_gaps()

    assert list(gaps['asset_id']) == ['0', '1', '2']
    assert list(gaps['gap']) == [2.0, 0.0, 2.0]


def test_align_and_restrict():
    base = panel([[1, 2, 3], [4, 5, 6]], assets=['X', 'Y', 'Z'])
    aligned = base.align(['Z', 'X'])

    assert aligned.asset_ids == ['Z', 'X']
    assert np.array_equal(aligned.raw, [[3, 1], [6, 4]])
    assert base.restrict(['G1']).agency_ids == ['G1']
    with pytest.raises(ShapeError):
        base.align(['W'])


def test_score_files_round_trip(tmp_path):
    history = ScoreHistory(
        [
            (date(2020, 1, 1), panel([[0, 50, 100], [1, 2, 3]], ['higher', 'lower'])),
            (date(2021, 1, 1), panel([[10, 60, 90], [3, 2, 1]], ['higher', 'lower'])),
        ]
    )
    scores, meta = str(tmp_path / 'scores.csv'), str(tmp_path / 'agencies.csv')
    write_scores(history, scores, meta)
    again = load_scores(scores, meta)

    assert again.dates == history.dates
    for (_, a), (_, b) in zip(again, history):
        assert a.agency_ids == b.agency_ids
        assert a.asset_ids == b.asset_ids
        assert np.array_equal(a.raw, b.raw)
        assert a.orientations == b.orientations


def test_undated_score_file(tmp_path):
    (tmp_path / 's.csv').write_text('agency,asset,score\ng,A,1\ng,B,2\n')
    (tmp_path / 'm.csv').write_text('agency,range_min,range_max,orientation\ng,0,10,lower\n')
    history = load_scores(str(tmp_path / 's.csv'), str(tmp_path / 'm.csv'))

    assert len(history) == 1
    assert history.dates == [date.min]
    assert history.latest().asset_ids == ['A', 'B']


def test_malformed_score(tmp_path):
    (tmp_path / 's.csv').write_text('agency,asset,score\ng,A,1\ng,B,x\n')
    (tmp_path / 'm.csv').write_text('agency,range_min,range_max,orientation\ng,0,10,higher\n')

    with pytest.raises(ParseError) as info:
        load_scores(str(tmp_path / 's.csv'), str(tmp_path / 'm.csv'))
    assert info.value.row == 2
    assert info.value.column == 'score'


def test_missing_score_cell(tmp_path):
    (tmp_path / 's.csv').write_text('agency,asset,score\ng,A,1\ng,B,2\nh,A,3\n')
    (tmp_path / 'm.csv').write_text(
        'agency,range_min,range_max,orientation\ng,0,10,higher\nh,0,10,higher\n'
    )
    with pytest.raises(ShapeError):
        load_scores(str(tmp_path / 's.csv'), str(tmp_path / 'm.csv'))
