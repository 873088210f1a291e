"""
kworst/main/baselines.py

The strategies the k-Worst portfolios are compared against, and the
comparison roster itself.

Functions:
* clean_weights: Clips tiny negative weights and renormalizes.
* equally_weighted: `1/n` in every asset.
* gmin_variance: The Global Minimum Variance portfolio.
* risk_parity: The long-only equal risk contribution portfolio.
* most_diversified: The portfolio with the largest diversification ratio.
* build_mv_esg, mv_esg: Minimum variance with a return and an ESG floor.
* mv_esg_profiles: The return / ESG target pairs of the MV-ESG strategies.
* diversification_ratio, risk_contributions: Portfolio diagnostics.
* table_roster: The full list of compared strategies.
"""

import logging
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .ksum import build_min_variance
from .model import config
from .model.config import SolverSettings
from .model.errors import InputError, InvalidArgumentError, ShapeError, SolverFailedError
from .model.market import check_psd
from .model.strategy import StrategyKind, StrategySpec
from .qp import QpProblem, solve_with_retries

logger = logging.getLogger(__name__)

# the lexicographic second stage accepts this much slack on its first stage
LEXICOGRAPHIC_SLACK = 1e-9
RISK_PARITY_TOLERANCE = 1e-10
MAX_NEWTON_STEPS = 100


def clean_weights(x: np.ndarray) -> np.ndarray:
    """
    Sets negative weights (solver round-off) to zero and rescales the rest to
    sum to one.

    Raises:
    * `InvalidArgumentError`: If nothing positive is left.
    """

    x = np.where(np.asarray(x, dtype=float) < 0, 0.0, x)
    total = x.sum()
    if not total > 0:
        raise InvalidArgumentError('Weights have no positive mass to normalize.')
    return x / total


def solve_weights(
    problem: QpProblem,
    what: str,
    n: int,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """
    Solves `problem` and returns its first `n` variables as cleaned weights.

    Raises:
    * `SolverFailedError`: If the solve isn't optimal.
    """

    solution = solve_with_retries(problem, settings)
    if not solution.optimal:
        raise SolverFailedError(what, solution.status)
    return clean_weights(solution.y_star[:n])


def equally_weighted(n: int) -> np.ndarray:
    """Returns `1/n` in each of `n` assets."""

    if n < 1:
        raise InvalidArgumentError('Equally weighted needs at least one asset.')
    return np.full(n, 1 / n)


def gmin_variance(
    sigma: np.ndarray, settings: Optional[SolverSettings] = None
) -> np.ndarray:
    """Returns the long-only Global Minimum Variance weights."""

    return solve_weights(
        build_min_variance(sigma), 'Global minimum variance', len(sigma), settings
    )


def _positive_definite(sigma: np.ndarray, what: str) -> np.ndarray:
    sigma = check_psd(sigma, 'covariance matrix')
    try:
        scipy.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise InputError(f'{what} needs a positive definite covariance.') from None
    return sigma


def risk_contributions(sigma: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Returns the risk contributions `x_i (Sigma x)_i`, summing to `x'Sx`."""

    x = np.asarray(x, dtype=float)
    return x * (np.asarray(sigma, dtype=float) @ x)


def risk_parity(sigma: np.ndarray) -> np.ndarray:
    """
    Returns the long-only equal risk contribution portfolio.

    Minimizes the strictly convex `1/2 y'Sy - 1/n sum(log y)` by damped Newton
    steps that keep `y > 0`. At its minimizer every `y_i (Sigma y)_i` is `1/n`,
    so the normalized `y` has equal risk contributions.

    Raises:
    * `InputError`: If `sigma` isn't positive definite.
    """

    sigma = _positive_definite(sigma, 'Risk parity')
    n = len(sigma)
    budget = 1 / n

    def objective(y: np.ndarray) -> float:
        return 0.5 * y @ sigma @ y - budget * np.sum(np.log(y))

    y = 1 / np.sqrt(np.diag(sigma) * n)
    for _ in range(MAX_NEWTON_STEPS):
        gradient = sigma @ y - budget / y
        hessian = sigma + np.diag(budget / y**2)
        step = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(hessian), gradient)
        decrement = -gradient @ step
        if decrement < 1e-24:
            break

        t = 1.0
        while np.any(y + t * step <= 0):
            t /= 2
        current = objective(y)
        while objective(y + t * step) > current - 0.25 * t * decrement and t > 1e-12:
            t /= 2
        y = y + t * step

    x = y / y.sum()
    contributions = risk_contributions(sigma, x)
    spread = (contributions.max() - contributions.min()) / contributions.sum()
    if spread > RISK_PARITY_TOLERANCE:
        logger.warning('Risk parity stopped with a contribution spread of %.3e.', spread)
    return x


def diversification_ratio(sigma: np.ndarray, x: np.ndarray) -> float:
    """
    Returns `(sum_j x_j sigma_j) / sqrt(x'Sx)`.

    Raises:
    * `InvalidArgumentError`: If the portfolio has no variance.
    """

    sigma = np.asarray(sigma, dtype=float)
    x = np.asarray(x, dtype=float)
    variance = float(x @ sigma @ x)
    if variance <= 0:
        raise InvalidArgumentError('The diversification ratio needs a risky portfolio.')
    return float(np.sqrt(np.diag(sigma)) @ x / np.sqrt(variance))


def most_diversified(
    sigma: np.ndarray, settings: Optional[SolverSettings] = None
) -> np.ndarray:
    """
    Returns the long-only portfolio with the largest diversification ratio.

    Solves `min x'Sx` subject to `sum_j sigma_j x_j = 1` and `x >= 0`, then
    rescales to the simplex. When no portfolio diversifies (a ratio of 1, as
    with perfectly correlated assets) every vertex is optimal and the first
    asset is returned.

    Raises:
    * `InputError`: If `sigma` isn't positive semidefinite or has a riskless
        asset.
    """

    sigma = check_psd(sigma, 'covariance matrix')
    vols = np.sqrt(np.diag(sigma))
    n = len(sigma)
    if np.any(vols <= 0):
        raise InputError('The most diversified portfolio needs risky assets.')

    problem = QpProblem(
        2 * sigma, np.zeros(n), vols[None, :], np.ones(1), lower=np.zeros(n)
    )
    x = solve_weights(problem, 'Most diversified portfolio', n, settings)
    if diversification_ratio(sigma, x) <= 1 + 1e-9:
        return np.eye(n)[0]
    return x


def _esg_row(esg_row: np.ndarray, n: int) -> np.ndarray:
    esg_row = np.asarray(esg_row, dtype=float).reshape(-1)
    if esg_row.shape != (n,):
        raise ShapeError(f'ESG row has length {len(esg_row)}, expected {n}.')
    if np.any(esg_row < 0) or np.any(esg_row > 1):
        raise InvalidArgumentError('Normalized ESG scores need to be inside [0, 1].')
    return esg_row


def build_mv_esg(
    sigma: np.ndarray,
    mu: np.ndarray,
    esg_row: np.ndarray,
    mu_bar: Optional[float],
    eta_bar: float,
) -> QpProblem:
    """
    Builds `min x'Sx` subject to `mu'x >= mu_bar` (left out when `None`),
    `esg_row'x >= eta_bar`, and the long-only simplex.
    """

    problem = build_min_variance(sigma, mu, mu_bar)
    esg_row = _esg_row(esg_row, problem.dim)
    A_in = np.vstack([problem.A_in, -esg_row])
    b_in = np.concatenate([problem.b_in, [-float(eta_bar)]])
    return QpProblem(
        problem.P, problem.q, problem.A_eq, problem.b_eq, A_in, b_in, problem.lower
    )


def mv_esg(
    sigma: np.ndarray,
    mu: np.ndarray,
    esg_row: np.ndarray,
    mu_bar: Optional[float],
    eta_bar: float,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """
    Returns the MV-ESG weights: minimum variance with a return floor and a
    floor on one agency's normalized ESG score.

    Raises:
    * `SolverFailedError`: If the targets are unreachable (status
        `infeasible`) or the solve fails.
    """

    return solve_weights(
        build_mv_esg(sigma, mu, esg_row, mu_bar, eta_bar),
        'MV-ESG',
        len(sigma),
        settings,
    )


def _max_esg(
    mu: np.ndarray,
    esg_row: np.ndarray,
    mu_bar: Optional[float],
    settings: Optional[SolverSettings],
) -> float:
    # the best ESG score reachable above the return floor, an LP
    n = len(esg_row)
    A_in = b_in = None
    if mu_bar is not None:
        A_in, b_in = -mu[None, :], np.array([-mu_bar])
    problem = QpProblem(
        np.zeros((n, n)), -esg_row, np.ones((1, n)), np.ones(1), A_in, b_in,
        lower=np.zeros(n),
    )
    x = solve_weights(problem, 'Maximum ESG portfolio', n, settings)
    return float(esg_row @ x)


def mv_esg_profiles(
    sigma: np.ndarray,
    mu: np.ndarray,
    esg_row: np.ndarray,
    alphas: Optional[Sequence[float]] = None,
    fraction: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
) -> list[tuple[float, float]]:
    """
    Builds the `(mu_bar, eta_bar)` targets of the MV-ESG strategies, the same
    way the k-Worst targets are built but on one agency's ESG score.

    The return range runs from the larger of the minimum variance portfolio's
    return and the greenest (least risky among the greenest) portfolio's
    return, up to the largest asset return; `mu_bar = mu_min + alpha (mu_max -
    mu_min)`. At each `mu_bar` the ESG range runs from the ESG score of the
    minimum variance portfolio with that return floor up to the best ESG score
    reachable with it; `eta_bar` sits `fraction` of the way down from the top.

    Arguments:
    * sigma, mu (`np.ndarray`): The moments.
    * esg_row (`np.ndarray`): Normalized ESG scores, greener-is-higher.
    * alphas (optional `Sequence[float]`): The return levels. Defaults to the
        package setting.
    * fraction (optional `float`): Defaults to the package score fraction.
    * settings (optional `SolverSettings`): The solver settings.
    """

    if alphas is None:
        alphas = config.get_target_alphas()
    if fraction is None:
        fraction = config.get_gamma_fraction()
    mu = np.asarray(mu, dtype=float)
    esg_row = _esg_row(esg_row, len(mu))

    mu_min_variance = float(mu @ gmin_variance(sigma, settings))
    best = float(esg_row.max())
    greenest = solve_weights(
        build_mv_esg(sigma, mu, esg_row, None, best - LEXICOGRAPHIC_SLACK),
        'Greenest portfolio',
        len(mu),
        settings,
    )
    mu_max = float(mu.max())
    mu_min = min(max(mu_min_variance, float(mu @ greenest)), mu_max)

    targets = []
    for alpha in alphas:
        mu_bar = mu_min + alpha * (mu_max - mu_min)
        low = float(
            esg_row
            @ solve_weights(
                build_min_variance(sigma, mu, mu_bar),
                'Minimum variance',
                len(mu),
                settings,
            )
        )
        high = max(_max_esg(mu, esg_row, mu_bar, settings), low)
        targets.append((mu_bar, high - fraction * (high - low)))
    return targets


def table_roster(
    ks: Sequence[int] = (),
    agency: Optional[str] = None,
    profiles: Optional[int] = None,
) -> list[StrategySpec]:
    """
    Returns the compared strategies: `GMinV`, `EW`, `RP`, `MDP`, then the
    MV-ESG profiles `Sust_1...` on `agency`, then the k-Worst profiles
    `Sust_1_<k>Worst...` for each `k`. Without an agency, only the
    strategies that don't use scores are listed.
    """

    if profiles is None:
        profiles = len(config.get_target_alphas())

    roster = [
        StrategySpec(kind=kind)
        for kind in (StrategyKind.GMIN_V, StrategyKind.EW, StrategyKind.RP, StrategyKind.MDP)
    ]
    if agency is None:
        return roster

    roster += [
        StrategySpec(kind=StrategyKind.MV_ESG, profile=i, agency=agency)
        for i in range(1, profiles + 1)
    ]
    for k in ks:
        roster += [
            StrategySpec(kind=StrategyKind.KWORST, profile=i, k=k)
            for i in range(1, profiles + 1)
        ]
    return roster
