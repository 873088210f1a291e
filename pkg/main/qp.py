"""
kworst/main/qp.py

The convex quadratic program engine under every portfolio model.

Problems are `min 1/2 y'Py + q'y` subject to `A_eq y = b_eq`, `A_in y <= b_in`
and `lower <= y <= upper`. They are solved by operator splitting (ADMM) on
the stacked form `l <= A y <= u`, with Ruiz equilibration, an adaptive
penalty, infeasibility certificates, and a polishing step that solves the
KKT system of the guessed active set exactly. A primal-dual interior point
pass takes over when ADMM runs out of iterations.

Enums:
* SolverStatus: How a solve ended.

Value Models:
* KktReport: The optimality residuals of a primal / dual pair.

Models:
* QpProblem: A convex quadratic program.
* QpSolution: A primal / dual result.

Functions:
* solve: Solves a `QpProblem`.
* solve_with_retries: `solve`, retried with escalated settings when it runs
    out of iterations.
* check_kkt: Recomputes the KKT residuals of a solution.
"""

import logging
from enum import Enum
from typing import Optional

import numpy as np
import scipy.linalg
import tenacity
from pydantic import BaseModel, ConfigDict, NonNegativeFloat

from .model import config
from .model.config import SolverSettings
from .model.errors import ShapeError
from .model.market import check_psd

logger = logging.getLogger(__name__)

RHO_MIN, RHO_MAX = 1e-6, 1e6
RHO_EQ_FACTOR = 1e3
SCALING_MIN, SCALING_MAX = 1e-4, 1e4
POLISH_DELTA = 1e-9
POLISH_REFINE = 10
EPS_FLOOR = 1e-13
IPM_MAX_ITER = 200
IPM_STEP = 0.99
IPM_DELTA = 1e-10


class SolverStatus(Enum):
    """
    The ways a solve can end.

    Attributes:
    * `OPTIMAL`: Every KKT residual is within tolerance.
    * `INFEASIBLE`: A primal infeasibility certificate was found.
    * `UNBOUNDED`: A dual infeasibility certificate was found.
    * `MAX_ITERATIONS`: The iteration cap was hit; the best iterate is kept.
    """

    OPTIMAL = 'optimal'
    INFEASIBLE = 'infeasible'
    UNBOUNDED = 'unbounded'
    MAX_ITERATIONS = 'max-iterations'


class KktReport(BaseModel):
    """
    A frozen model of the KKT residuals of a primal / dual pair.

    Attributes / Arguments:
    * stationarity (`float`): `||P y + q + A_eq'lam + A_in'mu - nu_l + nu_u||inf`.
    * primal (`float`): The largest constraint violation.
    * dual (`float`): The largest negative multiplier, including multipliers
        of bounds that don't exist.
    * complementarity (`float`): The largest `|multiplier * slack|`.
    """

    model_config = ConfigDict(frozen=True)

    stationarity: NonNegativeFloat
    primal: NonNegativeFloat
    dual: NonNegativeFloat
    complementarity: NonNegativeFloat

    @property
    def worst(self) -> float:
        """(`float`): The largest of the four residuals."""
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    def within(self, tol_feas: float, tol_opt: float) -> bool:
        """
        Returns if the primal residual is within `tol_feas` and the other
        three are within `tol_opt`.
        """

        return self.primal <= tol_feas and max(
            self.stationarity, self.dual, self.complementarity
        ) <= tol_opt


def _matrix(value, rows_name: str, d: int) -> np.ndarray:
    if value is None:
        return np.zeros((0, d))
    value = np.atleast_2d(np.array(value, dtype=float))
    if value.size == 0:
        return np.zeros((0, d))
    if value.shape[1] != d:
        raise ShapeError(f'{rows_name} has {value.shape[1]} columns, expected {d}.')
    return value


def _vector(value, name: str, size: int, fill: float = 0.0) -> np.ndarray:
    if value is None:
        return np.full(size, fill)
    value = np.array(value, dtype=float).reshape(-1)
    if value.shape != (size,):
        raise ShapeError(f'{name} has length {len(value)}, expected {size}.')
    return value


class QpProblem:
    """
    A convex quadratic program

        min 1/2 y'Py + q'y  s.t.  A_eq y = b_eq,  A_in y <= b_in,
                                  lower <= y <= upper.

    Arguments:
    * P (`np.ndarray`): The `d x d` symmetric positive semidefinite cost
        matrix. A smallest eigenvalue in `(-1e-10, 0)` is repaired.
    * q (`np.ndarray`): The linear cost.
    * A_eq, b_eq (optional `np.ndarray`): The equality constraints.
    * A_in, b_in (optional `np.ndarray`): The inequality constraints.
    * lower, upper (optional `np.ndarray`): Variable bounds, `-inf` / `inf`
        where absent.

    Methods:
    * objective (`float` method): The cost of a point.
    * dump (method): Writes the problem data as a plain-text matrix file.
    * Supports exact equality comparison of all problem data.
    """

    __slots__ = ('P', 'q', 'A_eq', 'b_eq', 'A_in', 'b_in', 'lower', 'upper')

    def __init__(
        self,
        P: np.ndarray,
        q: np.ndarray,
        A_eq: Optional[np.ndarray] = None,
        b_eq: Optional[np.ndarray] = None,
        A_in: Optional[np.ndarray] = None,
        b_in: Optional[np.ndarray] = None,
        lower: Optional[np.ndarray] = None,
        upper: Optional[np.ndarray] = None,
    ):
        self.q = np.array(q, dtype=float).reshape(-1)
        d = len(self.q)
        P = np.array(P, dtype=float)
        if P.shape != (d, d):
            raise ShapeError(f'P is {P.shape}, expected {(d, d)}.')
        self.P = check_psd(P, 'quadratic cost')
        self.A_eq = _matrix(A_eq, 'A_eq', d)
        self.b_eq = _vector(b_eq, 'b_eq', len(self.A_eq))
        self.A_in = _matrix(A_in, 'A_in', d)
        self.b_in = _vector(b_in, 'b_in', len(self.A_in))
        self.lower = _vector(lower, 'lower', d, -np.inf)
        self.upper = _vector(upper, 'upper', d, np.inf)

        if np.any(self.lower > self.upper):
            raise ShapeError('A lower bound is above its upper bound.')
        for name in self.__slots__:
            getattr(self, name).setflags(write=False)

    def __repr__(self) -> str:
        return (
            f'QpProblem(d={self.dim}, eq={len(self.A_eq)}, '
            f'in={len(self.A_in)})'
        )

    def __eq__(self, other) -> bool:
        if isinstance(other, self.__class__):
            return all(
                np.array_equal(getattr(self, i), getattr(other, i))
                for i in self.__slots__
            )
        return NotImplemented

    __hash__ = None

    @property
    def dim(self) -> int:
        """(`int`): The number of variables."""
        return len(self.q)

    def objective(self, y: np.ndarray) -> float:
        """Returns `1/2 y'Py + q'y`."""
        return float(0.5 * y @ self.P @ y + self.q @ y)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """
        Returns `(A, l, u, bounded)`: the constraints as one `l <= A y <= u`
        system, with equalities first, then inequalities, then one identity row
        per bounded variable (whose indices are `bounded`).
        """

        bounded = np.flatnonzero(np.isfinite(self.lower) | np.isfinite(self.upper))
        A = np.vstack([self.A_eq, self.A_in, np.eye(self.dim)[bounded]])
        l = np.concatenate(
            [self.b_eq, np.full(len(self.b_in), -np.inf), self.lower[bounded]]
        )
        u = np.concatenate([self.b_eq, self.b_in, self.upper[bounded]])
        return A, l, u, bounded

    def dump(self, path: str) -> None:
        """
        Writes every block of the problem to a plain-text file, one
        `# name rows x cols` header per block, for cross-checking against
        external solvers.
        """

        with open(path, 'w', encoding='UTF-8') as f:
            for name in self.__slots__:
                block = np.atleast_2d(getattr(self, name))
                f.write(f'# {name} {block.shape[0]} x {block.shape[1]}\n')
                np.savetxt(f, block, fmt='%.17g')


class QpSolution:
    """
    The result of a solve.

    Attributes:
    * y_star (`np.ndarray`): The primal point.
    * objective (`float`): Its cost.
    * dual_eq (`np.ndarray`): The equality multipliers.
    * dual_in (`np.ndarray`): The inequality multipliers, nonnegative at
        optimality.
    * dual_lower, dual_upper (`np.ndarray`): The bound multipliers, zero for
        absent bounds.
    * status (`SolverStatus`): How the solve ended.
    * iterations (`int`): The iterations used, ADMM plus interior point.
    * polished (`bool`): If the point comes from the polishing step.
    * kkt (`KktReport`): The residuals of the returned pair.
    """

    __slots__ = (
        'y_star',
        'objective',
        'dual_eq',
        'dual_in',
        'dual_lower',
        'dual_upper',
        'status',
        'iterations',
        'polished',
        'kkt',
    )

    def __init__(
        self,
        y_star: np.ndarray,
        *,
        objective: float,
        dual_eq: np.ndarray,
        dual_in: np.ndarray,
        dual_lower: np.ndarray,
        dual_upper: np.ndarray,
        status: SolverStatus = SolverStatus.OPTIMAL,
        iterations: int = 0,
        polished: bool = False,
        kkt: Optional[KktReport] = None,
    ):
        self.y_star = y_star
        self.objective = objective
        self.dual_eq = dual_eq
        self.dual_in = dual_in
        self.dual_lower = dual_lower
        self.dual_upper = dual_upper
        self.status = status
        self.iterations = iterations
        self.polished = polished
        self.kkt = kkt

    def __repr__(self) -> str:
        return (
            f'QpSolution(status={self.status.value!r}, '
            f'objective={self.objective:.6g}, iterations={self.iterations})'
        )

    @property
    def optimal(self) -> bool:
        """(`bool`): If the solve ended optimally."""
        return self.status is SolverStatus.OPTIMAL


def check_kkt(problem: QpProblem, solution: QpSolution) -> KktReport:
    """
    Recomputes the KKT residuals of a solution against its problem:
    stationarity `||P y + q + A_eq'lam + A_in'mu - nu_l + nu_u||inf`, primal
    feasibility, dual feasibility (`mu, nu >= 0` and no multiplier on an absent
    bound) and complementarity `max |multiplier * slack|`.
    """

    y = np.asarray(solution.y_star, dtype=float)
    lam = np.asarray(solution.dual_eq, dtype=float)
    mu = np.asarray(solution.dual_in, dtype=float)
    nu_l = np.asarray(solution.dual_lower, dtype=float)
    nu_u = np.asarray(solution.dual_upper, dtype=float)

    gradient = (
        problem.P @ y
        + problem.q
        + problem.A_eq.T @ lam
        + problem.A_in.T @ mu
        - nu_l
        + nu_u
    )

    has_bound = np.isfinite(problem.b_in)
    slack_in = np.where(has_bound, problem.A_in @ y - np.where(has_bound, problem.b_in, 0.0), 0.0)
    has_lower = np.isfinite(problem.lower)
    has_upper = np.isfinite(problem.upper)
    slack_lower = np.where(has_lower, y - problem.lower, 0.0)
    slack_upper = np.where(has_upper, problem.upper - y, 0.0)

    primal = max(
        np.max(np.abs(problem.A_eq @ y - problem.b_eq), initial=0.0),
        np.max(slack_in, initial=0.0),
        np.max(-slack_lower, initial=0.0),
        np.max(-slack_upper, initial=0.0),
    )
    dual = max(
        np.max(-mu, initial=0.0),
        np.max(-nu_l, initial=0.0),
        np.max(-nu_u, initial=0.0),
        np.max(np.abs(mu[~has_bound]), initial=0.0),
        np.max(np.abs(nu_l[~has_lower]), initial=0.0),
        np.max(np.abs(nu_u[~has_upper]), initial=0.0),
    )
    complementarity = max(
        np.max(np.abs(mu * slack_in), initial=0.0),
        np.max(np.abs(nu_l * slack_lower), initial=0.0),
        np.max(np.abs(nu_u * slack_upper), initial=0.0),
    )

    return KktReport(
        stationarity=float(np.max(np.abs(gradient), initial=0.0)),
        primal=float(primal),
        dual=float(dual),
        complementarity=float(complementarity),
    )


def _limit(norms: np.ndarray) -> np.ndarray:
    norms = np.where(norms < SCALING_MIN, 1.0, norms)
    return np.minimum(norms, SCALING_MAX)


def _stacked_solution(
    problem: QpProblem,
    x: np.ndarray,
    y: np.ndarray,
    status: SolverStatus,
    iterations: int,
    *,
    polished: bool = False,
) -> QpSolution:
    # y holds the multipliers of the `stacked()` rows, positive at an upper bound
    n_eq, n_in = len(problem.A_eq), len(problem.A_in)
    d = problem.dim
    bounded = np.flatnonzero(np.isfinite(problem.lower) | np.isfinite(problem.upper))
    y_bound = y[n_eq + n_in :]
    dual_lower, dual_upper = np.zeros(d), np.zeros(d)
    dual_lower[bounded] = np.maximum(-y_bound, 0)
    dual_upper[bounded] = np.maximum(y_bound, 0)

    solution = QpSolution(
        x,
        objective=problem.objective(x),
        dual_eq=y[:n_eq].copy(),
        dual_in=y[n_eq : n_eq + n_in].copy(),
        dual_lower=dual_lower,
        dual_upper=dual_upper,
        status=status,
        iterations=iterations,
        polished=polished,
    )
    solution.kkt = check_kkt(problem, solution)
    return solution


def _polish(
    problem: QpProblem, x: np.ndarray, z: np.ndarray, y: np.ndarray
) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """
    (internal) Guesses the active set from an unscaled iterate (`z = A x` and
    the multipliers `y` of the stacked rows) and solves its KKT system exactly,
    with iterative refinement. Returns `(x, y)` or `None` if the system can't
    be solved.
    """

    A, l, u, _ = problem.stacked()
    d = problem.dim
    eq_rows = l == u

    at_upper = (u - z < y) & np.isfinite(u)
    at_lower = (z - l < -y) & np.isfinite(l) & ~at_upper
    at_upper |= eq_rows
    at_lower &= ~eq_rows
    active = np.flatnonzero(at_upper | at_lower)
    target = np.where(at_upper, u, l)[active]

    A_act = A[active]
    k = len(active)
    kkt = np.block([[problem.P, A_act.T], [A_act, np.zeros((k, k))]])
    regular = kkt + np.diag(
        np.concatenate([np.full(d, POLISH_DELTA), np.full(k, -POLISH_DELTA)])
    )
    rhs = np.concatenate([-problem.q, target])

    try:
        factor = scipy.linalg.lu_factor(regular, check_finite=True)
    except (ValueError, np.linalg.LinAlgError):
        return None

    solved = scipy.linalg.lu_solve(factor, rhs)
    for _ in range(POLISH_REFINE):
        residual = rhs - kkt @ solved
        if np.max(np.abs(residual)) < 1e-15:
            break
        solved = solved + scipy.linalg.lu_solve(factor, residual)
    if not np.all(np.isfinite(solved)):
        return None

    y_polished = np.zeros(len(A))
    y_polished[active] = solved[d:]
    return solved[:d], y_polished


def _polished_candidate(
    problem: QpProblem, x, z, y, iterations: int
) -> Optional[QpSolution]:
    polished = _polish(problem, x, z, y)
    if polished is None:
        return None
    return _stacked_solution(
        problem, *polished, SolverStatus.OPTIMAL, iterations, polished=True
    )


class _Admm:
    """
    (internal) One ADMM solve. Works on the equilibrated problem
    `P = c D P D`, `q = c D q`, `A = E A D`, and reports in original units.
    """

    def __init__(self, problem: QpProblem, settings: SolverSettings):
        self.problem = problem
        self.settings = settings
        A, l, u, _ = problem.stacked()
        self.A_orig, self.l_orig, self.u_orig = A, l, u
        self._scale(problem.P.copy(), problem.q.copy(), A.copy())

        self.l = self.E * l
        self.u = self.E * u
        self.eq_rows = self.l_orig == self.u_orig
        self.free_rows = np.isinf(self.l_orig) & np.isinf(self.u_orig)
        self._set_rho(settings.rho)

    def _scale(self, P: np.ndarray, q: np.ndarray, A: np.ndarray) -> None:
        d, rows = len(q), len(A)
        D, E, c = np.ones(d), np.ones(rows), 1.0

        for _ in range(self.settings.scaling_iters):
            norm_var = np.abs(P).max(axis=0)
            if rows:
                norm_var = np.maximum(norm_var, np.abs(A).max(axis=0))
            delta_var = 1 / np.sqrt(_limit(norm_var))
            delta_con = (
                1 / np.sqrt(_limit(np.abs(A).max(axis=1))) if rows else np.ones(0)
            )

            P = delta_var[:, None] * P * delta_var[None, :]
            q = delta_var * q
            A = delta_con[:, None] * A * delta_var[None, :]
            D, E = D * delta_var, E * delta_con

            cost = max(np.abs(P).max(axis=0).mean(), np.abs(q).max(initial=0.0))
            gamma = 1 / _limit(np.array([cost]))[0]
            P, q, c = P * gamma, q * gamma, c * gamma

        self.P, self.q, self.A = P, q, A
        self.D, self.E, self.c = D, E, c

    def _set_rho(self, rho: float) -> None:
        self.rho = float(np.clip(rho, RHO_MIN, RHO_MAX))
        rho_vec = np.full(len(self.A), self.rho)
        rho_vec[self.eq_rows] = min(self.rho * RHO_EQ_FACTOR, RHO_MAX)
        rho_vec[self.free_rows] = RHO_MIN
        self.rho_vec = rho_vec

        kkt = (
            self.P
            + self.settings.sigma * np.eye(len(self.q))
            + self.A.T @ (rho_vec[:, None] * self.A)
        )
        self.factor = scipy.linalg.cho_factor(kkt)

    def _unscale(self, x, z, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.D * x, z / self.E, self.E * y / self.c

    def _residuals(self, x, z, y) -> tuple[float, float, float, float]:
        Ax = self.A @ x
        Px = self.P @ x
        Aty = self.A.T @ y
        prim = np.max(np.abs((Ax - z) / self.E), initial=0.0)
        prim_scale = max(
            np.max(np.abs(Ax / self.E), initial=0.0),
            np.max(np.abs(z / self.E), initial=0.0),
        )
        dual = np.max(np.abs((Px + self.q + Aty) / self.D)) / self.c
        dual_scale = (
            max(
                np.max(np.abs(Px / self.D)),
                np.max(np.abs(Aty / self.D)),
                np.max(np.abs(self.q / self.D)),
            )
            / self.c
        )
        return prim, prim_scale, dual, dual_scale

    def _primal_infeasible(self, delta_y: np.ndarray) -> bool:
        eps = self.settings.eps_infeasible
        delta = self.E * delta_y
        norm = np.max(np.abs(delta), initial=0.0)
        if norm < 1e-10:
            return False
        delta = delta / norm
        if np.max(np.abs(self.A_orig.T @ delta), initial=0.0) > eps:
            return False

        upper = np.isfinite(self.u_orig)
        lower = np.isfinite(self.l_orig)
        positive = np.maximum(delta, 0)
        negative = np.minimum(delta, 0)
        if np.any(positive[~upper] > eps) or np.any(negative[~lower] < -eps):
            return False
        support = np.sum(self.u_orig[upper] * positive[upper]) + np.sum(
            self.l_orig[lower] * negative[lower]
        )
        return support < -eps

    def _dual_infeasible(self, delta_x: np.ndarray) -> bool:
        eps = self.settings.eps_infeasible
        delta = self.D * delta_x
        norm = np.max(np.abs(delta))
        if norm < 1e-10:
            return False
        delta = delta / norm
        problem = self.problem
        if np.max(np.abs(problem.P @ delta)) > eps or problem.q @ delta > -eps:
            return False
        moved = self.A_orig @ delta
        upper = np.isfinite(self.u_orig)
        lower = np.isfinite(self.l_orig)
        return not (np.any(moved[upper] > eps) or np.any(moved[lower] < -eps))

    def _solution(
        self, x, y, status, iterations, *, polished=False
    ) -> QpSolution:
        return _stacked_solution(
            self.problem, x, y, status, iterations, polished=polished
        )

    def run(self) -> QpSolution:
        settings = self.settings
        n, rows = len(self.q), len(self.A)
        x, z, y = np.zeros(n), np.zeros(rows), np.zeros(rows)
        eps = settings.eps_admm
        best: Optional[QpSolution] = None
        sigma, alpha = settings.sigma, settings.alpha

        for iteration in range(1, settings.max_iter + 1):
            x_prev, y_prev = x, y

            rhs = sigma * x - self.q + self.A.T @ (self.rho_vec * z - y)
            x_tilde = scipy.linalg.cho_solve(self.factor, rhs)
            z_tilde = self.A @ x_tilde
            x = alpha * x_tilde + (1 - alpha) * x
            z_relaxed = alpha * z_tilde + (1 - alpha) * z
            z = np.clip(z_relaxed + y / self.rho_vec, self.l, self.u)
            y = y + self.rho_vec * (z_relaxed - z)

            if iteration % settings.check_interval and iteration != settings.max_iter:
                continue

            if self._primal_infeasible(y - y_prev):
                logger.debug('Primal infeasible after %d iterations.', iteration)
                x_u, _, y_u = self._unscale(x, z, y)
                return self._solution(x_u, y_u, SolverStatus.INFEASIBLE, iteration)
            if self._dual_infeasible(x - x_prev):
                logger.debug('Dual infeasible after %d iterations.', iteration)
                x_u, _, y_u = self._unscale(x, z, y)
                return self._solution(x_u, y_u, SolverStatus.UNBOUNDED, iteration)

            prim, prim_scale, dual, dual_scale = self._residuals(x, z, y)
            if prim <= eps * (1 + prim_scale) and dual <= eps * (1 + dual_scale):
                x_u, z_u, y_u = self._unscale(x, z, y)
                candidates = []
                if settings.polish:
                    polished = _polished_candidate(
                        self.problem, x_u, z_u, y_u, iteration
                    )
                    if polished is not None:
                        candidates.append(polished)
                candidates.append(
                    self._solution(x_u, y_u, SolverStatus.OPTIMAL, iteration)
                )

                for candidate in candidates:
                    if candidate.kkt.within(settings.tol_feas, settings.tol_opt):
                        logger.debug(
                            'Optimal after %d iterations (polished: %s).',
                            iteration,
                            candidate.polished,
                        )
                        return candidate
                    if best is None or candidate.kkt.worst < best.kkt.worst:
                        best = candidate
                eps = max(eps / 10, EPS_FLOOR)

            if settings.adaptive_rho and prim_scale > 0 and dual_scale > 0:
                Ax, z_norm = self.A @ x, np.max(np.abs(z), initial=0.0)
                prim_rel = np.max(np.abs(Ax - z), initial=0.0) / max(
                    np.max(np.abs(Ax), initial=0.0), z_norm, 1e-30
                )
                dual_rel = np.max(np.abs(self.P @ x + self.q + self.A.T @ y)) / max(
                    np.max(np.abs(self.P @ x)),
                    np.max(np.abs(self.A.T @ y)),
                    np.max(np.abs(self.q)),
                    1e-30,
                )
                if prim_rel > 0 and dual_rel > 0:
                    rho_new = self.rho * np.sqrt(prim_rel / dual_rel)
                    if rho_new > 5 * self.rho or rho_new < self.rho / 5:
                        self._set_rho(rho_new)

        x_u, z_u, y_u = self._unscale(x, z, y)
        if settings.polish:
            # the last iterate may still sit on the right active set
            polished = _polished_candidate(
                self.problem, x_u, z_u, y_u, settings.max_iter
            )
            if polished is not None and polished.kkt.within(
                settings.tol_feas, settings.tol_opt
            ):
                return polished

        last = self._solution(x_u, y_u, SolverStatus.MAX_ITERATIONS, settings.max_iter)
        if best is not None and best.kkt.worst < last.kkt.worst:
            best.status = SolverStatus.MAX_ITERATIONS
            best.iterations = settings.max_iter
            return best
        return last


def _step_to_boundary(value: np.ndarray, step: np.ndarray) -> float:
    shrinking = step < 0
    if not np.any(shrinking):
        return np.inf
    return float(np.min(-value[shrinking] / step[shrinking]))


class _InteriorPoint:
    """
    (internal) One primal-dual interior point solve with Mehrotra's predictor
    and corrector. The inequality rows and the finite bounds become
    `G y + s = h`, `s >= 0`; the equalities stay as `A_eq y = b_eq`. It takes
    over when ADMM stops at the iteration cap, which happens on the nearly
    linear score blocks where the ADMM tail converges slowly.
    """

    def __init__(self, problem: QpProblem, settings: SolverSettings):
        self.problem = problem
        self.settings = settings
        d = problem.dim
        eye = np.eye(d)
        self.rows_in = np.flatnonzero(np.isfinite(problem.b_in))
        self.rows_lower = np.flatnonzero(np.isfinite(problem.lower))
        self.rows_upper = np.flatnonzero(np.isfinite(problem.upper))
        self.bounded = np.flatnonzero(
            np.isfinite(problem.lower) | np.isfinite(problem.upper)
        )
        self.G = np.vstack(
            [
                problem.A_in[self.rows_in],
                -eye[self.rows_lower],
                eye[self.rows_upper],
            ]
        )
        self.h = np.concatenate(
            [
                problem.b_in[self.rows_in],
                -problem.lower[self.rows_lower],
                problem.upper[self.rows_upper],
            ]
        )

    def _factor(self, ratio: np.ndarray):
        # [[P + G'WG, A'], [A, 0]], lightly regularized
        P, A, G = self.problem.P, self.problem.A_eq, self.G
        d, n_eq = len(P), len(A)
        H = P + G.T @ (ratio[:, None] * G) + IPM_DELTA * np.eye(d)
        K = np.block([[H, A.T], [A, -IPM_DELTA * np.eye(n_eq)]])
        return scipy.linalg.lu_factor(K, check_finite=True)

    def _direction(self, factor, ratio, s, r_dual, r_eq, r_slack, r_comp):
        d = self.problem.dim
        w = ratio * r_slack - r_comp / s
        rhs = np.concatenate([-r_dual - self.G.T @ w, -r_eq])
        step = scipy.linalg.lu_solve(factor, rhs)
        dy, dlam = step[:d], step[d:]
        Gdy = self.G @ dy
        dz = w + ratio * Gdy
        ds = -r_slack - Gdy
        return dy, dlam, dz, ds

    def _stacked_duals(self, lam: np.ndarray, z: np.ndarray) -> np.ndarray:
        problem = self.problem
        d = problem.dim
        n_in, n_lower = len(self.rows_in), len(self.rows_lower)
        dual_in = np.zeros(len(problem.A_in))
        dual_in[self.rows_in] = z[:n_in]
        bound = np.zeros(d)
        bound[self.rows_lower] -= z[n_in : n_in + n_lower]
        bound[self.rows_upper] += z[n_in + n_lower :]
        return np.concatenate([lam, dual_in, bound[self.bounded]])

    def _start(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        # least squares fit of the inequalities under the equalities
        problem = self.problem
        factor = self._factor(np.ones(len(self.h)))
        rhs = np.concatenate([self.G.T @ self.h - problem.q, problem.b_eq])
        start = scipy.linalg.lu_solve(factor, rhs)
        y, lam = start[: problem.dim], start[problem.dim :]
        s = np.maximum(self.h - self.G @ y, 1.0)
        return y, lam, s, np.ones(len(self.h))

    def run(self, offset: int = 0) -> Optional[QpSolution]:
        """
        Returns the first iterate (or its polished version) within tolerance,
        otherwise the best iterate seen with status `MAX_ITERATIONS`, or `None`
        if the starting point can't be computed.
        `offset` is added to the reported iteration count.
        """

        problem, settings = self.problem, self.settings
        P, q, A, b, G, h = (
            problem.P, problem.q, problem.A_eq, problem.b_eq, self.G, self.h
        )
        rows = len(h)
        best: Optional[QpSolution] = None

        try:
            y, lam, s, z = self._start()
        except (ValueError, np.linalg.LinAlgError):
            return None

        for iteration in range(1, IPM_MAX_ITER + 1):
            y_stacked = self._stacked_duals(lam, z)
            candidate = _stacked_solution(
                problem, y, y_stacked, SolverStatus.MAX_ITERATIONS, offset + iteration
            )
            if candidate.kkt.within(settings.tol_feas, settings.tol_opt):
                candidate.status = SolverStatus.OPTIMAL
                if settings.polish:
                    # an interior iterate separates the active set cleanly
                    polished = _polished_candidate(
                        problem, y, problem.stacked()[0] @ y, y_stacked, offset + iteration
                    )
                    if polished is not None and polished.kkt.within(
                        settings.tol_feas, settings.tol_opt
                    ):
                        candidate = polished
                logger.debug(
                    'Interior point optimal after %d iterations (polished: %s).',
                    iteration,
                    candidate.polished,
                )
                return candidate
            if best is None or candidate.kkt.worst < best.kkt.worst:
                best = candidate

            r_dual = P @ y + q + A.T @ lam + G.T @ z
            r_eq = A @ y - b
            r_slack = G @ y + s - h
            gap = float(s @ z) / rows if rows else 0.0
            ratio = z / s

            try:
                factor = self._factor(ratio)
                # predictor, aiming straight at s * z = 0
                dy, dlam, dz, ds = self._direction(
                    factor, ratio, s, r_dual, r_eq, r_slack, s * z
                )
                if rows:
                    alpha = min(
                        1.0, _step_to_boundary(s, ds), _step_to_boundary(z, dz)
                    )
                    gap_affine = float((s + alpha * ds) @ (z + alpha * dz)) / rows
                    centering = (gap_affine / gap) ** 3 if gap > 0 else 0.0
                    # corrector, re-centered
                    dy, dlam, dz, ds = self._direction(
                        factor,
                        ratio,
                        s,
                        r_dual,
                        r_eq,
                        r_slack,
                        s * z + ds * dz - centering * gap,
                    )
            except (ValueError, np.linalg.LinAlgError):
                break

            alpha = min(
                1.0,
                IPM_STEP * min(_step_to_boundary(s, ds), _step_to_boundary(z, dz)),
            )
            y, lam = y + alpha * dy, lam + alpha * dlam
            s, z = s + alpha * ds, z + alpha * dz
            if not (
                np.all(np.isfinite(y))
                and np.all(np.isfinite(lam))
                and np.all(np.isfinite(z))
                and np.all(s > 0)
                and np.all(z > 0)
            ):
                break

        return best


def solve(
    problem: QpProblem, settings: Optional[SolverSettings] = None
) -> QpSolution:
    """
    Solves a convex quadratic program.

    Arguments:
    * problem (`QpProblem`): The program.
    * settings (optional `SolverSettings`): The solver settings. Defaults to
        the package settings.

    Returns:
    * solution (`QpSolution`): On `OPTIMAL`, the primal violation is within
        `tol_feas` and the other KKT residuals within `tol_opt`. On
        `MAX_ITERATIONS`, the best iterate found. Deterministic for fixed
        inputs and settings.

    ADMM runs first. When it stops at the iteration cap, an interior point
    pass (if `settings.interior_point`) solves the problem again from scratch
    and the better of the two is returned.
    """

    if settings is None:
        settings = config.get_solver_settings()
    solution = _Admm(problem, settings).run()
    if not (settings.interior_point and _ran_out(solution)):
        return solution

    logger.debug('ADMM hit the iteration cap, switching to the interior point pass.')
    fallback = _InteriorPoint(problem, settings).run(offset=solution.iterations)
    if fallback is not None and (
        fallback.optimal or fallback.kkt.worst < solution.kkt.worst
    ):
        return fallback
    return solution


def _ran_out(solution: QpSolution) -> bool:
    return solution.status is SolverStatus.MAX_ITERATIONS


def solve_with_retries(
    problem: QpProblem, settings: Optional[SolverSettings] = None
) -> QpSolution:
    """
    `solve`, retried up to `settings.attempts` times while it stops at the
    iteration cap. Every retry doubles the cap and raises the starting penalty
    (see `SolverSettings.escalate`). Returns the last solution either way.
    """

    if settings is None:
        settings = config.get_solver_settings()

    solution: Optional[QpSolution] = None
    for attempt in tenacity.Retrying(
        stop=tenacity.stop_after_attempt(settings.attempts),
        retry=tenacity.retry_if_result(_ran_out),
        before_sleep=tenacity.before_sleep_log(logger, logging.WARNING),
        retry_error_callback=lambda state: state.outcome.result(),
    ):
        with attempt:
            solution = solve(
                problem, settings.escalate(attempt.retry_state.attempt_number)
            )
        if not attempt.retry_state.outcome.failed:
            attempt.retry_state.set_result(solution)
    return solution
