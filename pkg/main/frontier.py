"""
kworst/main/frontier.py

The efficient surface of the variance / return / k-Worst score problem,
traced by sweeping the epsilon-constraint model over a grid of return floors
and score ceilings.

Value Models:
* KWorstTarget: A (return floor, score ceiling) pair with its score range.

Models:
* FrontierPoint: One solved grid point.
* FrontierSurface: The whole grid.

Functions:
* compute_mu_range: The range of sensible return floors.
* compute_gamma_range: The range of sensible score ceilings at a return floor.
* trace_surface: Solves the whole grid.
* select_profiles: The four targets the k-Worst strategies invest in.
* mean_variance_frontier: The return-floor-only frontier.
* export_surface: Writes a surface as CSV plus a manifest.
"""

import logging
from concurrent import futures
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from .baselines import LEXICOGRAPHIC_SLACK, clean_weights, solve_weights
from .ksum import (
    KsumInstance,
    build_epsilon_constraint,
    build_min_score,
    build_min_variance,
    kworst_oracle,
)
from .model import config
from .model.config import SolverSettings
from .model.errors import InfeasibleError, InvalidArgumentError, SolverFailedError
from .qp import SolverStatus, solve_with_retries
from .storage import OutputUOW

logger = logging.getLogger(__name__)

# achieved levels this close to a target count as the constraint binding
BINDING_TOLERANCE = 1e-7
SURFACE_COLUMNS = [
    'mu_bar',
    'gamma_bar',
    'variance',
    'exp_return',
    'kworst_score',
    'status',
]


class KWorstTarget(BaseModel):
    """
    A frozen model of a k-Worst strategy target.

    Attributes / Arguments:
    * alpha (`float`): The return level as a fraction of the return range.
    * mu_bar (`float`): The return floor.
    * gamma_min, gamma_max (`float`): The score range at `mu_bar`.
    * gamma_bar (`float`): The score ceiling.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float
    mu_bar: float
    gamma_min: float
    gamma_max: float
    gamma_bar: float


class FrontierPoint:
    """
    One solved point of a frontier.

    Attributes:
    * mu_bar (`float`): The return floor.
    * gamma_bar (optional `float`): The score ceiling, `None` on the
        mean-variance frontier.
    * status (`SolverStatus`): How the solve ended.
    * weights (optional `np.ndarray`): The portfolio, `None` unless optimal.
    * variance, expected_return (optional `float`): Its moments.
    * kworst_score (optional `float`): Its k-Worst score, when known.
    * return_binding, score_binding (`bool`): If the portfolio sits on its
        return floor / score ceiling.

    Properties:
    * optimal (`bool`): If the point was solved.
    * weakly_efficient (`bool`): If a constraint is slack, so the point may
        only be weakly efficient.
    """

    __slots__ = (
        'mu_bar',
        'gamma_bar',
        'status',
        'weights',
        'variance',
        'expected_return',
        'kworst_score',
        'return_binding',
        'score_binding',
    )

    def __init__(
        self,
        mu_bar: float,
        gamma_bar: Optional[float],
        status: SolverStatus,
        weights: Optional[np.ndarray] = None,
        *,
        sigma: Optional[np.ndarray] = None,
        mu: Optional[np.ndarray] = None,
        kworst_score: Optional[float] = None,
    ):
        self.mu_bar = mu_bar
        self.gamma_bar = gamma_bar
        self.status = status
        self.weights = weights
        self.kworst_score = kworst_score
        self.variance = self.expected_return = None
        self.return_binding = self.score_binding = False

        if weights is not None:
            self.variance = float(weights @ sigma @ weights)
            self.expected_return = float(mu @ weights)
            self.return_binding = self.expected_return <= mu_bar + BINDING_TOLERANCE
            self.score_binding = (
                gamma_bar is not None
                and kworst_score is not None
                and kworst_score >= gamma_bar - BINDING_TOLERANCE
            )

    def __repr__(self) -> str:
        return (
            f'FrontierPoint(mu_bar={self.mu_bar:.6g}, gamma_bar={self.gamma_bar}, '
            f'status={self.status.value!r})'
        )

    @property
    def optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL

    @property
    def weakly_efficient(self) -> bool:
        return self.optimal and not (self.return_binding and self.score_binding)


class FrontierSurface:
    """
    The solved grid of an efficient surface.

    Arguments / Attributes:
    * instance (`KsumInstance`): The instance swept.
    * mu_grid (`list[float]`): The return floors.
    * gamma_ranges (`list[Optional[tuple[float, float]]]`): `(gamma_min,
        gamma_max)` per return floor, `None` where the range couldn't be
        computed.
    * gamma_grids (`list[list[Optional[float]]]`): The score ceilings per
        return floor. A floor without a range has the single ceiling `None`,
        whose point carries the failed status.
    * points (`list[list[FrontierPoint]]`): The points, `points[i][j]` at
        `(mu_grid[i], gamma_grids[i][j])`.

    Methods:
    * failed (`list[FrontierPoint]` method): The points that weren't solved.
    * to_frame (`pd.DataFrame` method): The surface table.
    """

    __slots__ = ('instance', 'mu_grid', 'gamma_ranges', 'gamma_grids', 'points')

    def __init__(
        self,
        instance: KsumInstance,
        mu_grid: list[float],
        gamma_ranges: list[Optional[tuple[float, float]]],
        gamma_grids: list[list[Optional[float]]],
        points: list[list[FrontierPoint]],
    ):
        self.instance = instance
        self.mu_grid = mu_grid
        self.gamma_ranges = gamma_ranges
        self.gamma_grids = gamma_grids
        self.points = points

    def __repr__(self) -> str:
        return f'FrontierSurface({len(self.mu_grid)} return levels, k={self.instance.k})'

    def __iter__(self):
        for row in self.points:
            yield from row

    def __len__(self) -> int:
        return sum(len(row) for row in self.points)

    def failed(self) -> list[FrontierPoint]:
        return [i for i in self if not i.optimal]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                [
                    i.mu_bar,
                    i.gamma_bar,
                    i.variance,
                    i.expected_return,
                    i.kworst_score,
                    i.status.value,
                ]
                for i in self
            ],
            columns=SURFACE_COLUMNS,
        )


def _settings(settings: Optional[SolverSettings]) -> SolverSettings:
    return config.get_solver_settings() if settings is None else settings


def compute_mu_range(
    instance: KsumInstance, settings: Optional[SolverSettings] = None
) -> tuple[float, float]:
    """
    Returns `(mu_min, mu_max)`.

    `mu_min` is the larger of the minimum variance portfolio's return and the
    minimum k-Worst score portfolio's return; below it, lowering the return
    floor changes nothing. Among several minimum score portfolios the least
    risky one is used. `mu_max` is the largest asset return.

    Raises:
    * `SolverFailedError`: If one of the two portfolios can't be solved.
    """

    settings = _settings(settings)
    n, mu = instance.n, instance.mu

    mu_min_variance = float(
        mu @ solve_weights(build_min_variance(instance.sigma), 'Minimum variance', n, settings)
    )

    min_score = solve_with_retries(build_min_score(instance), settings)
    if not min_score.optimal:
        raise SolverFailedError('Minimum k-Worst score', min_score.status)
    greenest = clean_weights(min_score.y_star[:n])
    gamma_star = max(min_score.objective, kworst_oracle(instance, greenest))
    try:
        greenest = solve_weights(
            build_epsilon_constraint(instance, None, gamma_star + LEXICOGRAPHIC_SLACK),
            'Least risky minimum score',
            n,
            settings,
        )
    except SolverFailedError as exc:
        logger.debug('Keeping the first minimum score portfolio: %s', exc)

    mu_max = float(mu.max())
    return min(max(mu_min_variance, float(mu @ greenest)), mu_max), mu_max


def compute_gamma_range(
    instance: KsumInstance,
    mu_bar: float,
    settings: Optional[SolverSettings] = None,
) -> tuple[float, float]:
    """
    Returns `(gamma_min, gamma_max)` at the return floor `mu_bar`: the minimum
    k-Worst score reachable with that floor, and the k-Worst score of the
    minimum variance portfolio with that floor.

    Raises:
    * `InfeasibleError`: If no portfolio reaches `mu_bar`.
    * `SolverFailedError`: If a solve fails for another reason.
    """

    settings = _settings(settings)
    if mu_bar > instance.mu.max() + settings.tol_feas:
        raise InfeasibleError(
            f'Return floor {mu_bar:.6g} is above the best asset return '
            f'{instance.mu.max():.6g}.'
        )

    min_score = solve_with_retries(build_min_score(instance, mu_bar), settings)
    if min_score.status is SolverStatus.INFEASIBLE:
        raise InfeasibleError(f'Return floor {mu_bar:.6g} is unreachable.')
    if not min_score.optimal:
        raise SolverFailedError('Minimum k-Worst score', min_score.status)
    greenest = clean_weights(min_score.y_star[: instance.n])
    gamma_min = max(min_score.objective, kworst_oracle(instance, greenest))

    least_risky = solve_weights(
        build_min_variance(instance.sigma, instance.mu, mu_bar),
        'Minimum variance',
        instance.n,
        settings,
    )
    gamma_max = kworst_oracle(instance, least_risky)
    return min(gamma_min, gamma_max), gamma_max


def _grid(low: float, high: float, count: int) -> list[float]:
    if count < 1:
        raise InvalidArgumentError('Grids need at least one level.')
    if count == 1 or high - low <= 1e-12:
        return [low]
    return [float(i) for i in np.linspace(low, high, count)]


def _row_range(
    instance: KsumInstance, mu_bar: float, settings: SolverSettings
) -> tuple[Optional[tuple[float, float]], Optional[SolverStatus]]:
    try:
        return compute_gamma_range(instance, mu_bar, settings), None
    except InfeasibleError as exc:
        logger.warning('Return level %.6g has no score range: %s', mu_bar, exc)
        return None, SolverStatus.INFEASIBLE
    except SolverFailedError as exc:
        logger.warning('Return level %.6g has no score range: %s', mu_bar, exc)
        return None, exc.status


def _solve_point(
    instance: KsumInstance,
    mu_bar: float,
    gamma_bar: float,
    settings: SolverSettings,
) -> FrontierPoint:
    solution = solve_with_retries(
        build_epsilon_constraint(instance, mu_bar, gamma_bar), settings
    )
    if not solution.optimal:
        logger.debug(
            'Point (%.6g, %.6g) ended %s.', mu_bar, gamma_bar, solution.status.value
        )
        return FrontierPoint(mu_bar, gamma_bar, solution.status)

    weights = clean_weights(solution.y_star[: instance.n])
    return FrontierPoint(
        mu_bar,
        gamma_bar,
        solution.status,
        weights,
        sigma=instance.sigma,
        mu=instance.mu,
        kworst_score=kworst_oracle(instance, weights),
    )


def trace_surface(
    instance: KsumInstance,
    n_mu: Optional[int] = None,
    n_gamma: Optional[int] = None,
    *,
    settings: Optional[SolverSettings] = None,
    workers: Optional[int] = None,
) -> FrontierSurface:
    """
    Traces the efficient surface on a uniform `n_mu x n_gamma` grid.

    Return floors run uniformly over `compute_mu_range`; at each, score
    ceilings run uniformly over `compute_gamma_range`. Zero-width ranges
    collapse to one level. Every point is an epsilon-constraint solve; a failed
    solve is kept in the surface with its status and never stops the sweep.
    A return floor whose score range fails becomes one unsolved point with no
    ceiling.

    Arguments:
    * instance (`KsumInstance`): The instance.
    * n_mu, n_gamma (optional `int`): The grid size. Defaults to the package
        grid.
    * settings (keyword-only optional `SolverSettings`): The solver settings.
    * workers (keyword-only optional `int`): Threads solving points.

    Returns:
    * surface (`FrontierSurface`): The solved grid, in grid order.
    """

    settings = _settings(settings)
    default_mu, default_gamma = config.get_grid_size()
    n_mu = default_mu if n_mu is None else n_mu
    n_gamma = default_gamma if n_gamma is None else n_gamma
    workers = config.get_workers() if workers is None else workers

    mu_min, mu_max = compute_mu_range(instance, settings)
    mu_grid = _grid(mu_min, mu_max, n_mu)
    logger.info('Tracing %d return levels in [%.6g, %.6g].', len(mu_grid), mu_min, mu_max)

    with futures.ThreadPoolExecutor(max_workers=workers) as executor:
        rows = list(
            executor.map(lambda mu_bar: _row_range(instance, mu_bar, settings), mu_grid)
        )
        gamma_ranges = [found for found, _ in rows]
        gamma_grids = [
            [None] if found is None else _grid(*found, n_gamma) for found in gamma_ranges
        ]
        cells = [
            (mu_bar, gamma_bar, status)
            for mu_bar, grid, (_, status) in zip(mu_grid, gamma_grids, rows)
            for gamma_bar in grid
        ]

        def solve_cell(cell):
            mu_bar, gamma_bar, status = cell
            if status is not None:
                return FrontierPoint(mu_bar, None, status)
            return _solve_point(instance, mu_bar, gamma_bar, settings)

        solved = list(executor.map(solve_cell, cells))

    points, start = [], 0
    for grid in gamma_grids:
        points.append(solved[start : start + len(grid)])
        start += len(grid)

    failed = sum(not i.optimal for i in solved)
    if failed:
        logger.warning('%d of %d surface points were not solved.', failed, len(solved))
    return FrontierSurface(instance, mu_grid, gamma_ranges, gamma_grids, points)


def select_profiles(
    instance: KsumInstance,
    alphas: Optional[Sequence[float]] = None,
    fraction: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
) -> list[KWorstTarget]:
    """
    Returns the targets of the k-Worst strategies: for each `alpha`, the
    return floor `mu_min + alpha (mu_max - mu_min)` and the score ceiling
    `gamma_min + fraction (gamma_max - gamma_min)` at that floor.

    Arguments:
    * instance (`KsumInstance`): The instance, carrying `k`.
    * alphas (optional `Sequence[float]`): Defaults to the package
        `(0, 1/4, 1/2, 3/4)`.
    * fraction (optional `float`): Defaults to the package `2/5`.
    * settings (optional `SolverSettings`): The solver settings.
    """

    alphas = config.get_target_alphas() if alphas is None else alphas
    fraction = config.get_gamma_fraction() if fraction is None else fraction

    mu_min, mu_max = compute_mu_range(instance, settings)
    targets = []
    for alpha in alphas:
        mu_bar = mu_min + alpha * (mu_max - mu_min)
        gamma_min, gamma_max = compute_gamma_range(instance, mu_bar, settings)
        targets.append(
            KWorstTarget(
                alpha=alpha,
                mu_bar=mu_bar,
                gamma_min=gamma_min,
                gamma_max=gamma_max,
                gamma_bar=gamma_min + fraction * (gamma_max - gamma_min),
            )
        )
    return targets


def mean_variance_frontier(
    sigma: np.ndarray,
    mu: np.ndarray,
    n_points: Optional[int] = None,
    settings: Optional[SolverSettings] = None,
    *,
    instance: Optional[KsumInstance] = None,
    mu_bars: Optional[Sequence[float]] = None,
) -> list[FrontierPoint]:
    """
    Sweeps the minimum variance model over `n_points` uniform return floors
    from the minimum variance portfolio's return to the largest asset return,
    or over the given `mu_bars` (a surface's `mu_grid`, say). Given an
    `instance`, every point also carries its k-Worst score.

    Raises:
    * `InvalidArgumentError`: If neither `n_points` nor `mu_bars` is given.
    """

    settings = _settings(settings)
    sigma = np.asarray(sigma, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if mu_bars is None:
        if n_points is None:
            raise InvalidArgumentError('The frontier needs n_points or mu_bars.')
        low = float(
            mu @ solve_weights(build_min_variance(sigma), 'Minimum variance', len(mu), settings)
        )
        high = float(mu.max())
        mu_bars = _grid(min(low, high), high, n_points)

    points = []
    for mu_bar in mu_bars:
        solution = solve_with_retries(build_min_variance(sigma, mu, mu_bar), settings)
        if not solution.optimal:
            points.append(FrontierPoint(mu_bar, None, solution.status))
            continue
        weights = clean_weights(solution.y_star)
        points.append(
            FrontierPoint(
                mu_bar,
                None,
                solution.status,
                weights,
                sigma=sigma,
                mu=mu,
                kworst_score=None if instance is None else kworst_oracle(instance, weights),
            )
        )
    return points


def export_surface(surface: FrontierSurface, uow: OutputUOW) -> None:
    """
    Stages the surface table `surface.csv` and its grid metadata in `uow`.
    Nothing is written until the unit of work commits.
    """

    uow.artifacts.add_table('surface', surface.to_frame())
    uow.manifest.update(
        {
            'grid': {
                'n_mu': len(surface.mu_grid),
                'n_gamma': max(len(i) for i in surface.gamma_grids),
                'mu_range': [surface.mu_grid[0], surface.mu_grid[-1]],
                'gamma_ranges': [
                    None if i is None else list(i) for i in surface.gamma_ranges
                ],
            },
            'instance': {
                'n': surface.instance.n,
                'm': surface.instance.m,
                'k': surface.instance.k,
                'agencies': surface.instance.agency_ids,
                'hash': surface.instance.digest(),
            },
            'failed_points': len(surface.failed()),
            'points': len(surface),
        }
    )
