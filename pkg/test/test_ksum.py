import numpy as np
import pytest

from ..main.baselines import gmin_variance
from ..main.ksum import (
    KsumInstance,
    VariableLayout,
    build_epsilon_constraint,
    build_min_score,
    build_min_variance,
    build_scalarized,
    build_single_objective,
    kworst_dual_point,
    kworst_dual_value,
    kworst_oracle,
)
from ..main.model import InvalidArgumentError, ShapeError, SolverSettings
from ..main.qp import QpProblem, SolverStatus, solve, solve_with_retries
from .oracles import (
    kworst_by_subsets,
    minimax_score,
    random_covariance,
    simplex_grid,
    simplex_qp,
)


def flat_instance(agency_scores, k, n=3) -> KsumInstance:
    # each agency rates every asset the same, so s^i(x) is constant on the simplex
    S = np.repeat(np.array(agency_scores, dtype=float)[:, None], n, axis=1)
    return KsumInstance(np.eye(n), np.zeros(n), S, k)


def random_instance(rng, n, m, k=None) -> KsumInstance:
    return KsumInstance(
        random_covariance(rng, n, 1e-3),
        rng.normal(0.001, 0.002, n),
        rng.uniform(0, 1, (m, n)),
        k if k is not None else int(rng.integers(1, m + 1)),
    )


def test_kworst_hand_example():
    instance = flat_instance([0.5, 0.2, 0.3], 2)
    x = np.array([0.2, 0.3, 0.5])

    assert kworst_oracle(instance, x) == pytest.approx(0.8, abs=1e-15)
    v, u = kworst_dual_point(instance, x)
    assert u == pytest.approx(0.3)
    assert np.allclose(v, [0.2, 0.0, 0.0])
    assert kworst_dual_value(instance, x) == pytest.approx(0.8, abs=1e-15)


def test_kworst_extremes():
    rng = np.random.default_rng(31)
    instance = random_instance(rng, 6, 4, 4)
    x = rng.dirichlet(np.ones(6))
    scores = instance.S @ x

    assert kworst_oracle(instance, x) == pytest.approx(scores.sum(), abs=1e-15)
    assert kworst_oracle(instance.with_k(1), x) == pytest.approx(scores.max(), abs=1e-15)


@pytest.mark.parametrize('k', [1, 2, 3])
def test_ties(k):
    instance = flat_instance([0.4, 0.4, 0.4], k)
    assert kworst_dual_value(instance, np.ones(3) / 3) == pytest.approx(k * 0.4, abs=1e-15)


def test_dual_matches_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n, m = int(rng.integers(1, 21)), int(rng.integers(1, 7))
        S = rng.uniform(0, 1, (m, n))
        k = int(rng.integers(1, m + 1))
        instance = KsumInstance(np.eye(n), np.zeros(n), S, k)
        x = rng.dirichlet(np.ones(n))

        oracle = kworst_oracle(instance, x)
        assert abs(kworst_dual_value(instance, x) - oracle) <= 1e-12
        assert abs(kworst_by_subsets(S, x, k) - oracle) <= 1e-12


@pytest.mark.parametrize('k', [0, 4, 1.5, True])
def test_invalid_k(k):
    with pytest.raises(InvalidArgumentError):
        flat_instance([0.1, 0.2, 0.3], k)


def test_instance_validation():
    with pytest.raises(InvalidArgumentError):
        KsumInstance(np.eye(2), np.zeros(2), [[0.5, 1.5]], 1)
    with pytest.raises(ShapeError):
        KsumInstance(np.eye(2), np.zeros(3), [[0.5, 0.5]], 1)


def test_restrict_and_digest():
    rng = np.random.default_rng(4)
    instance = random_instance(rng, 4, 3, 3)
    instance = KsumInstance(
        instance.sigma, instance.mu, instance.S, 3, agency_ids=['a', 'b', 'c']
    )
    restricted = instance.restrict(['c', 'a'])

    assert restricted.k == 2
    assert np.array_equal(restricted.S, instance.S[[2, 0]])
    assert instance.digest() == instance.with_k(3).digest()
    assert instance.digest() != instance.with_k(2).digest()
    with pytest.raises(InvalidArgumentError):
        instance.restrict(['z'])


def test_layout():
    layout = VariableLayout(3, 2)
    y = np.arange(6.0)
    x, v, u = layout.split(y)

    assert layout.dim == 6
    assert np.array_equal(x, [0, 1, 2])
    assert np.array_equal(v, [3, 4])
    assert u == 5.0
    assert layout.kworst_block(y, 2) == 2 * 5 + 3 + 4


def single_objective(instance: KsumInstance, x: np.ndarray) -> float:
    return float(x @ instance.sigma @ x - instance.mu @ x + kworst_oracle(instance, x))


def test_single_objective_symmetric_assets():
    instance = KsumInstance(
        0.04 * np.eye(2), [0.01, 0.01], [[0.3, 0.3], [0.6, 0.6]], 1
    )
    solution = solve(build_single_objective(instance))

    assert solution.optimal
    assert np.allclose(solution.y_star[:2], [0.5, 0.5], atol=1e-7)


def test_single_objective_prefers_green_asset():
    S = np.ones((3, 4))
    S[:, 0] = 0.0
    instance = KsumInstance(1e-4 * np.eye(4), np.zeros(4), S, 2)
    solution = solve(build_single_objective(instance))

    assert solution.optimal
    assert solution.y_star[0] >= 1 - 1e-6


@pytest.mark.slow
def test_single_objective_against_grid():
    rng = np.random.default_rng(42)
    instance = KsumInstance(
        random_covariance(rng, 3, 0.5),
        rng.normal(0.1, 0.2, 3),
        rng.uniform(0, 1, (3, 3)),
        2,
    )
    solution = solve(build_single_objective(instance))
    layout = VariableLayout.of(instance)
    x = solution.y_star[layout.x]

    best_on_grid = min(single_objective(instance, point) for point in simplex_grid(3, 0.005))
    found = single_objective(instance, x)

    assert solution.optimal
    assert found <= best_on_grid + 1e-7
    assert best_on_grid - found <= 0.02
    assert solution.objective == pytest.approx(found, abs=1e-6)
    assert layout.kworst_block(solution.y_star, 2) == pytest.approx(
        kworst_oracle(instance, x), abs=1e-6
    )


def test_scalarized_unit_weights_is_single_objective():
    instance = random_instance(np.random.default_rng(6), 5, 3)
    assert build_scalarized(instance, (1, 1, 1)) == build_single_objective(instance)


@pytest.mark.parametrize('lambdas', [(0, 0, 0), (1, -1, 1), (1, 1), (np.nan, 1, 1)])
def test_scalarized_invalid_weights(lambdas):
    instance = random_instance(np.random.default_rng(6), 5, 3)
    with pytest.raises(InvalidArgumentError):
        build_scalarized(instance, lambdas)


def test_scalarized_variance_only_is_gmin_v():
    instance = random_instance(np.random.default_rng(8), 5, 3)
    solution = solve(build_scalarized(instance, (1, 0, 0)))

    assert solution.optimal
    assert np.allclose(solution.y_star[:5], gmin_variance(instance.sigma), atol=1e-5)


def test_scalarized_score_only_is_min_score():
    instance = random_instance(np.random.default_rng(10), 6, 4)
    scalarized = solve(build_scalarized(instance, (0, 0, 1)))
    min_score = solve(build_min_score(instance))

    assert scalarized.optimal and min_score.optimal
    assert scalarized.objective == pytest.approx(min_score.objective, abs=1e-7)


def test_min_score_finds_perfect_green_asset():
    S = np.full((3, 4), 0.7)
    S[:, 2] = 0.0
    instance = KsumInstance(np.eye(4), np.zeros(4), S, 2)
    solution = solve(build_min_score(instance))

    assert solution.objective == pytest.approx(0.0, abs=1e-7)
    assert solution.y_star[2] == pytest.approx(1.0, abs=1e-6)


def test_min_score_single_agency_is_greenest_vertex():
    instance = KsumInstance(np.eye(4), np.zeros(4), [[0.9, 0.3, 0.1, 0.5]], 1)
    solution = solve(build_min_score(instance))

    assert solution.objective == pytest.approx(0.1, abs=1e-7)
    assert np.allclose(solution.y_star[:4], [0, 0, 1, 0], atol=1e-6)


def test_min_score_return_floor_above_max_is_infeasible():
    instance = random_instance(np.random.default_rng(12), 4, 2)
    problem = build_min_score(instance, float(instance.mu.max()) + 0.01)
    assert solve(problem).status is SolverStatus.INFEASIBLE


@pytest.mark.parametrize(
    ('sigma', 'expected'),
    [(np.eye(4), [0.25] * 4), (np.diag([1.0, 4.0]), [0.8, 0.2])],
)
def test_min_variance_closed_forms(sigma, expected):
    solution = solve(build_min_variance(sigma))
    assert np.allclose(solution.y_star, expected, atol=1e-8)


def test_min_variance_against_oracle():
    sigma = random_covariance(np.random.default_rng(14), 5)
    solution = solve(build_min_variance(sigma))
    assert np.allclose(solution.y_star, simplex_qp(2 * sigma, np.zeros(5)), atol=1e-6)


def test_min_variance_return_floor():
    mu = np.array([0.01, 0.02, 0.03])
    assert solve(build_min_variance(np.eye(3), mu, 0.04)).status is SolverStatus.INFEASIBLE

    x = solve(build_min_variance(np.eye(3), mu, 0.025)).y_star
    assert mu @ x >= 0.025 - 1e-8
    with pytest.raises(InvalidArgumentError):
        build_min_variance(np.eye(3), None, 0.02)


def test_epsilon_constraint_variance_falls_as_ceiling_rises():
    rng = np.random.default_rng(16)
    instance = random_instance(rng, 6, 4, 2)
    floor = solve(build_min_score(instance)).objective
    ceiling = kworst_oracle(instance, gmin_variance(instance.sigma))
    gammas = np.linspace(floor + 0.1 * (ceiling - floor), ceiling, 4)

    variances = []
    for gamma in gammas:
        solution = solve(build_epsilon_constraint(instance, None, gamma))
        assert solution.optimal
        x = solution.y_star[:6]
        assert kworst_oracle(instance, x) <= gamma + 1e-7
        variances.append(float(x @ instance.sigma @ x))

    assert all(a >= b - 1e-10 for a, b in zip(variances, variances[1:]))


def test_epsilon_constraint_unreachable_targets():
    instance = random_instance(np.random.default_rng(18), 4, 3)
    high_return = build_epsilon_constraint(instance, float(instance.mu.max()) + 0.01, 10.0)
    assert solve(high_return).status is SolverStatus.INFEASIBLE

    floor = solve(build_min_score(instance)).objective
    below_floor = build_epsilon_constraint(instance, None, floor - 0.05)
    assert solve(below_floor).status is SolverStatus.INFEASIBLE


@pytest.mark.parametrize('seed', range(6))
def test_scalarized_optimum_solves_its_epsilon_constraint(seed):
    rng = np.random.default_rng(40 + seed)
    instance = random_instance(rng, 6, 4)
    lambdas = (rng.uniform(50, 500), rng.uniform(0.5, 2), rng.uniform(0.005, 0.05))
    scalarized = solve(build_scalarized(instance, lambdas))
    assert scalarized.optimal
    x = scalarized.y_star[:6]
    mu_bar, gamma_bar = float(instance.mu @ x), kworst_oracle(instance, x)

    bridged = solve(build_epsilon_constraint(instance, mu_bar, gamma_bar))
    assert bridged.optimal
    x_bridged = bridged.y_star[:6]
    assert x_bridged @ instance.sigma @ x_bridged == pytest.approx(
        x @ instance.sigma @ x, rel=1e-4, abs=1e-10
    )
    assert instance.mu @ x_bridged >= mu_bar - 1e-7
    assert kworst_oracle(instance, x_bridged) <= gamma_bar + 1e-7


@pytest.mark.parametrize('seed', range(5))
def test_one_worst_is_the_minimax_score(seed):
    rng = np.random.default_rng(50 + seed)
    instance = random_instance(rng, 7, 4, 1)
    n, m = instance.n, instance.m

    min_score = solve(build_min_score(instance))
    assert min_score.optimal
    assert min_score.objective == pytest.approx(minimax_score(instance.S), abs=1e-7)

    # min x'Sx - mu'x + t  s.t.  s^i x <= t, on the simplex
    P = np.zeros((n + 1, n + 1))
    P[:n, :n] = 2 * instance.sigma
    epigraph = QpProblem(
        P,
        np.concatenate([-instance.mu, [1.0]]),
        np.concatenate([np.ones(n), [0.0]])[None, :],
        [1.0],
        A_in=np.hstack([instance.S, -np.ones((m, 1))]),
        b_in=np.zeros(m),
        lower=np.concatenate([np.zeros(n), [-np.inf]]),
    )
    single = solve(build_single_objective(instance))
    reference = solve(epigraph)

    assert single.optimal and reference.optimal
    assert single.objective == pytest.approx(reference.objective, abs=1e-7)


@pytest.mark.parametrize('seed', range(5))
def test_all_worst_is_the_total_score(seed):
    rng = np.random.default_rng(55 + seed)
    instance = random_instance(rng, 6, 3, 3)
    totals = instance.S.sum(axis=0)

    min_score = solve(build_min_score(instance))
    assert min_score.objective == pytest.approx(totals.min(), abs=1e-7)

    P, q = 2 * instance.sigma, totals - instance.mu
    x = simplex_qp(P, q)
    single = solve(build_single_objective(instance))
    assert single.optimal
    assert single.objective == pytest.approx(0.5 * x @ P @ x + q @ x, abs=1e-7)


def test_kworst_is_convex_along_segments():
    rng = np.random.default_rng(60)
    for _ in range(200):
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 6))
        S = rng.uniform(0, 1, (m, n))
        k = int(rng.integers(1, m + 1))
        instance = KsumInstance(np.eye(n), np.zeros(n), S, k)
        a, b = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        ends = kworst_oracle(instance, a), kworst_oracle(instance, b)

        for t in np.linspace(0, 1, 7):
            x = t * a + (1 - t) * b
            value = kworst_oracle(instance, x)
            assert value <= t * ends[0] + (1 - t) * ends[1] + 1e-12
            assert value == pytest.approx(kworst_by_subsets(S, x, k), abs=1e-12)


@pytest.mark.parametrize('seed', range(5))
def test_min_score_grows_with_k(seed):
    rng = np.random.default_rng(65 + seed)
    instance = random_instance(rng, 6, 5)
    x = rng.dirichlet(np.ones(6))

    optima, at_x = [], []
    for k in range(1, 6):
        solution = solve(build_min_score(instance.with_k(k)))
        assert solution.optimal
        optima.append(solution.objective)
        at_x.append(kworst_oracle(instance.with_k(k), x))

    assert all(a <= b + 1e-7 for a, b in zip(optima, optima[1:]))
    assert all(a <= b for a, b in zip(at_x, at_x[1:]))
    assert optima[-1] == pytest.approx(instance.S.sum(axis=0).min(), abs=1e-7)


def ten_asset_problems(rng):
    instance = random_instance(rng, 10, 4)
    return (
        build_single_objective(instance),
        build_scalarized(instance, rng.uniform(0.1, 10, 3)),
        build_min_score(instance),
    )


def test_interior_point_solves_ten_asset_instances():
    rng = np.random.default_rng(71)
    settings = SolverSettings(max_iter=10, check_interval=10)
    for _ in range(30):
        for problem in ten_asset_problems(rng):
            solution = solve(problem, settings)
            assert solution.status is SolverStatus.OPTIMAL
            assert solution.kkt.within(1e-8, 1e-8)


@pytest.mark.slow
def test_ten_asset_instances_reach_optimum():
    rng = np.random.default_rng(70)
    for _ in range(300):
        for problem in ten_asset_problems(rng):
            solution = solve_with_retries(problem)
            assert solution.status is SolverStatus.OPTIMAL
            assert solution.kkt.within(1e-8, 1e-8)
