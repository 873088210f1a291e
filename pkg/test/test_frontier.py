import json

import numpy as np
import pytest

from ..main import frontier
from ..main.baselines import gmin_variance
from ..main.frontier import (
    SURFACE_COLUMNS,
    compute_gamma_range,
    compute_mu_range,
    export_surface,
    mean_variance_frontier,
    select_profiles,
    trace_surface,
)
from ..main.ksum import (
    KsumInstance,
    build_epsilon_constraint,
    build_min_variance,
    kworst_oracle,
)
from ..main.model import InfeasibleError, InvalidArgumentError, SolverFailedError
from ..main.qp import SolverStatus, solve
from ..main.storage import OutputUOW
from .oracles import random_covariance


def instance_of(seed: int, n: int = 5, m: int = 3, k: int = 2) -> KsumInstance:
    rng = np.random.default_rng(seed)
    return KsumInstance(
        random_covariance(rng, n, 1e-3),
        rng.normal(0.01, 0.005, n),
        rng.uniform(0, 1, (m, n)),
        k,
    )


def single_agency_lp(s: np.ndarray, mu: np.ndarray, mu_bar: float) -> float:
    # min s'x over the simplex with mu'x >= mu_bar; optima sit on vertices or
    # where an edge crosses the return floor
    values = [s[j] for j in range(len(s)) if mu[j] >= mu_bar]
    for i in range(len(s)):
        for j in range(len(s)):
            if mu[i] < mu_bar < mu[j]:
                t = (mu_bar - mu[i]) / (mu[j] - mu[i])
                values.append(s[i] + t * (s[j] - s[i]))
    return min(values)


def test_identical_returns_collapse_the_range():
    rng = np.random.default_rng(1)
    instance = KsumInstance(random_covariance(rng, 4), np.full(4, 0.02), rng.uniform(0, 1, (2, 4)), 1)
    mu_min, mu_max = compute_mu_range(instance)

    assert mu_min == pytest.approx(0.02, abs=1e-9)
    assert mu_max == 0.02


def test_mu_range_uses_greener_portfolio_when_it_earns_more():
    # the green asset has the best return, so the minimum score portfolio
    # beats the minimum variance one
    instance = KsumInstance(
        np.diag([0.01, 0.02, 0.09]), [0.01, 0.02, 0.05], [[0.8, 0.6, 0.0]], 1
    )
    mu_min, mu_max = compute_mu_range(instance)

    assert mu_max == 0.05
    assert mu_min == pytest.approx(0.05, abs=1e-6)


def test_mu_range_lower_end_is_min_variance_return():
    instance = instance_of(3)
    mu_min, mu_max = compute_mu_range(instance)
    gmin_return = float(instance.mu @ gmin_variance(instance.sigma))

    assert mu_min >= gmin_return - 1e-8
    assert mu_min <= mu_max


def test_gamma_range_single_agency_matches_lp():
    rng = np.random.default_rng(5)
    mu = rng.normal(0.01, 0.005, 5)
    s = rng.uniform(0, 1, 5)
    instance = KsumInstance(random_covariance(rng, 5), mu, s[None, :], 1)
    mu_bar = float(np.mean(mu))
    gamma_min, gamma_max = compute_gamma_range(instance, mu_bar)

    assert gamma_min == pytest.approx(single_agency_lp(s, mu, mu_bar), abs=1e-7)
    assert gamma_min <= gamma_max


def test_gamma_range_at_best_return_is_a_point():
    instance = instance_of(7)
    best = int(np.argmax(instance.mu))
    gamma_min, gamma_max = compute_gamma_range(instance, float(instance.mu[best]))
    vertex_score = kworst_oracle(instance, np.eye(instance.n)[best])

    assert gamma_min == pytest.approx(vertex_score, abs=1e-6)
    assert gamma_max == pytest.approx(vertex_score, abs=1e-6)


def test_gamma_range_above_best_return():
    instance = instance_of(7)
    with pytest.raises(InfeasibleError):
        compute_gamma_range(instance, float(instance.mu.max()) + 0.01)


def test_lower_endpoint_is_min_variance():
    instance = instance_of(9)
    mu_min, _ = compute_mu_range(instance)
    _, gamma_max = compute_gamma_range(instance, mu_min)

    x = solve(build_epsilon_constraint(instance, mu_min, gamma_max + 1e-9)).y_star[: instance.n]
    expected = solve(build_min_variance(instance.sigma, instance.mu, mu_min)).y_star
    assert np.allclose(x, expected, atol=1e-5)


def test_upper_endpoint_is_best_asset():
    instance = instance_of(11)
    best = int(np.argmax(instance.mu))
    mu_max = float(instance.mu[best])
    _, gamma_max = compute_gamma_range(instance, mu_max)

    x = solve(build_epsilon_constraint(instance, mu_max, gamma_max + 1e-9)).y_star[: instance.n]
    assert np.allclose(x, np.eye(instance.n)[best], atol=1e-5)


def test_symmetric_surface_is_constant():
    instance = KsumInstance(0.01 * np.eye(2), [0.01, 0.01], [[0.4, 0.4], [0.7, 0.7]], 1)
    surface = trace_surface(instance, 2, 2, workers=1)

    assert len(surface) >= 1
    for point in surface:
        assert point.optimal
        assert np.allclose(point.weights, [0.5, 0.5], atol=1e-6)


def test_surface_variance_grows_as_ceiling_tightens():
    instance = instance_of(13, n=6, m=4, k=2)
    surface = trace_surface(instance, 3, 4, workers=2)

    assert len(surface.mu_grid) == 3
    assert not surface.failed()
    for row in surface.points:
        variances = [point.variance for point in row]
        # ceilings rise along a row
        assert all(a >= b - 1e-10 for a, b in zip(variances, variances[1:]))
        for point in row:
            assert point.kworst_score <= point.gamma_bar + 1e-6
            assert point.expected_return >= point.mu_bar - 1e-7


def test_surface_frame_and_export(tmp_path):
    instance = instance_of(15, n=4, m=3, k=2)
    surface = trace_surface(instance, 2, 2, workers=1)
    frame = surface.to_frame()

    assert list(frame.columns) == SURFACE_COLUMNS
    assert len(frame) == len(surface)

    with OutputUOW(directory=str(tmp_path), command='frontier') as uow:
        export_surface(surface, uow)
        uow.commit()

    manifest = json.loads((tmp_path / 'manifest.json').read_text())
    assert manifest['instance']['k'] == 2
    assert manifest['points'] == len(surface)
    assert manifest['files'] == ['surface.csv']
    assert (tmp_path / 'surface.csv').read_text().splitlines()[0] == ','.join(SURFACE_COLUMNS)


def test_select_profiles():
    instance = instance_of(17)
    mu_min, mu_max = compute_mu_range(instance)
    targets = select_profiles(instance, alphas=(0.0, 0.25, 0.5, 0.75), fraction=0.4)

    assert targets[0].mu_bar == mu_min
    assert [t.mu_bar for t in targets] == pytest.approx(
        [mu_min + a * (mu_max - mu_min) for a in (0.0, 0.25, 0.5, 0.75)]
    )
    for target in targets:
        assert target.gamma_min <= target.gamma_bar <= target.gamma_max
        assert target.gamma_bar == pytest.approx(
            target.gamma_min + 0.4 * (target.gamma_max - target.gamma_min)
        )
        assert solve(build_epsilon_constraint(instance, target.mu_bar, target.gamma_bar)).optimal


def test_mean_variance_frontier():
    instance = instance_of(19)
    points = mean_variance_frontier(instance.sigma, instance.mu, 5, instance=instance)

    assert len(points) == 5
    assert points[-1].mu_bar == float(instance.mu.max())
    variances = [point.variance for point in points]
    assert all(a <= b + 1e-10 for a, b in zip(variances, variances[1:]))
    assert all(point.kworst_score is not None for point in points)
    assert all(point.gamma_bar is None for point in points)


def test_mean_variance_frontier_on_given_floors():
    instance = instance_of(21)
    floors = [float(instance.mu.max())]
    points = mean_variance_frontier(instance.sigma, instance.mu, mu_bars=floors)

    assert [point.mu_bar for point in points] == floors
    with pytest.raises(InvalidArgumentError):
        mean_variance_frontier(instance.sigma, instance.mu)


def test_gamma_min_grows_with_the_return_floor():
    instance = instance_of(23, n=6, m=4, k=2)
    mu_min, mu_max = compute_mu_range(instance)

    floors = [compute_gamma_range(instance, mu_bar)[0] for mu_bar in np.linspace(mu_min, mu_max, 6)]
    assert all(a <= b + 1e-7 for a, b in zip(floors, floors[1:]))


def test_binding_points_are_not_dominated():
    instance = instance_of(25, n=6, m=4, k=2)
    surface = trace_surface(instance, 4, 4, workers=2)
    solved = [point for point in surface if point.optimal]

    for point in solved:
        if point.weakly_efficient:
            continue
        for other in solved:
            # anything inside this point's targets is at least as risky
            if (
                other.expected_return >= point.mu_bar
                and other.kworst_score <= point.gamma_bar
            ):
                assert other.variance >= point.variance * (1 - 1e-4)


def test_slack_ceiling_is_weakly_efficient():
    instance = instance_of(27)
    mu_min, _ = compute_mu_range(instance)
    _, gamma_max = compute_gamma_range(instance, mu_min)
    loose = gamma_max + 0.5

    solution = solve(build_epsilon_constraint(instance, mu_min, loose))
    weights = solution.y_star[: instance.n]
    point = frontier.FrontierPoint(
        mu_min,
        loose,
        solution.status,
        weights,
        sigma=instance.sigma,
        mu=instance.mu,
        kworst_score=kworst_oracle(instance, weights),
    )

    assert point.optimal
    assert not point.score_binding
    assert point.weakly_efficient
    expected = solve(build_min_variance(instance.sigma, instance.mu, mu_min)).y_star
    assert point.variance == pytest.approx(expected @ instance.sigma @ expected, rel=1e-4)


def test_gamma_max_column_is_the_mean_variance_frontier():
    instance = instance_of(29, n=6, m=4, k=2)
    surface = trace_surface(instance, 4, 3, workers=2)
    baseline = mean_variance_frontier(
        instance.sigma, instance.mu, mu_bars=surface.mu_grid, instance=instance
    )

    for row, gamma_range, reference in zip(surface.points, surface.gamma_ranges, baseline):
        assert reference.optimal and row[-1].optimal
        assert row[-1].gamma_bar == pytest.approx(gamma_range[1], abs=1e-12)
        assert gamma_range[1] == pytest.approx(reference.kworst_score, abs=1e-6)
        assert row[-1].variance == pytest.approx(reference.variance, rel=1e-4)


def test_failed_score_range_keeps_the_sweep(monkeypatch, tmp_path):
    instance = instance_of(31, n=4, m=3, k=2)
    mu_min, mu_max = compute_mu_range(instance)
    exact = frontier.compute_gamma_range

    def flaky(instance, mu_bar, settings=None):
        if mu_bar == mu_max:
            raise InfeasibleError('Return floor is unreachable.')
        if mu_bar > mu_min:
            raise SolverFailedError('Minimum k-Worst score', SolverStatus.MAX_ITERATIONS)
        return exact(instance, mu_bar, settings)

    monkeypatch.setattr(frontier, 'compute_gamma_range', flaky)
    surface = trace_surface(instance, 3, 3, workers=2)

    assert len(surface.mu_grid) == 3
    assert surface.gamma_ranges[0] is not None
    assert surface.gamma_ranges[1:] == [None, None]
    assert all(point.optimal for point in surface.points[0])
    assert [row[0].status for row in surface.points[1:]] == [
        SolverStatus.MAX_ITERATIONS,
        SolverStatus.INFEASIBLE,
    ]
    assert all(len(row) == 1 and row[0].gamma_bar is None for row in surface.points[1:])
    assert len(surface.failed()) == 2

    frame = surface.to_frame()
    assert list(frame['status'].iloc[-2:]) == ['max-iterations', 'infeasible']
    with OutputUOW(directory=str(tmp_path), command='frontier') as uow:
        export_surface(surface, uow)
        uow.commit()
    manifest = json.loads((tmp_path / 'manifest.json').read_text())
    assert manifest['failed_points'] == 2
    assert manifest['grid']['gamma_ranges'][1:] == [None, None]
