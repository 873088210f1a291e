"""
kworst/main/ksum.py

The k-Worst Non-ESG operator and the quadratic programs built around it.

The k-Worst Non-ESG score of a portfolio `x` is the sum of its `k` largest
agency scores `s^i(x) = S[i] @ x`. Written as the dual of the top-`k`
selection LP, it becomes `min k u + sum(v)` subject to `v_i + u >= s^i(x)`
and `v, u >= 0`, which is what every builder below embeds, over the decision
vector `y = (x, v, u)`.

Models:
* KsumInstance: Covariance, expected returns, Non-ESG matrix and `k`.
* VariableLayout: Where `x`, `v` and `u` sit inside `y`.

Functions:
* portfolio_scores: Every agency's score of a portfolio.
* kworst_oracle: The k-Worst score by sorting.
* kworst_dual_point, kworst_dual_value: The k-Worst score by the closed-form
    dual.
* build_single_objective, build_scalarized, build_epsilon_constraint,
    build_min_score, build_min_variance: The model builders.
"""

import hashlib
from typing import Optional, Sequence

import numpy as np

from .model.errors import InvalidArgumentError, ShapeError
from .model.market import MomentEstimate, check_psd
from .model.panel import NonEsgPanel
from .qp import QpProblem


class KsumInstance:
    """
    A portfolio problem with `n` assets rated by `m` agencies.

    Arguments:
    * sigma (`np.ndarray`): The `n x n` covariance, positive semidefinite.
    * mu (`np.ndarray`): The `n` expected returns.
    * S (`np.ndarray`): The `m x n` Non-ESG matrix, entries in [0, 1].
    * k (`int`): How many of the worst agency scores count, `1 <= k <= m`.
    * agency_ids (keyword-only optional `Sequence[str]`): The agency ids of the
        rows of `S`. Defaults to `'0'`, `'1'`, ...
    * asset_ids (keyword-only optional `Sequence[str]`): The asset ids.

    Attributes:
    * n, m (property `int`): The asset and agency counts.

    Methods:
    * from_panel (classmethod): Builds an instance from moments and a
        Non-ESG panel.
    * with_k (`KsumInstance` method): The same instance for another `k`.
    * restrict (`KsumInstance` method): Keeps a subset of agencies.
    * digest (`str` method): A hash of the instance data.
    """

    __slots__ = ('sigma', 'mu', 'S', 'k', 'agency_ids', 'asset_ids')

    def __init__(
        self,
        sigma: np.ndarray,
        mu: np.ndarray,
        S: np.ndarray,
        k: int,
        *,
        agency_ids: Optional[Sequence[str]] = None,
        asset_ids: Optional[Sequence[str]] = None,
    ):
        self.sigma = check_psd(sigma, 'covariance matrix')
        self.mu = np.array(mu, dtype=float).reshape(-1)
        self.S = np.atleast_2d(np.array(S, dtype=float))
        n = len(self.sigma)

        if self.mu.shape != (n,) or self.S.shape[1] != n:
            raise ShapeError(
                f'Covariance is {self.sigma.shape}, returns {self.mu.shape} '
                f'and scores {self.S.shape}; they need to agree on n.'
            )
        if np.any(self.S < 0) or np.any(self.S > 1) or not np.all(np.isfinite(self.S)):
            raise InvalidArgumentError('Non-ESG scores need to be inside [0, 1].')
        if isinstance(k, bool) or int(k) != k or not 1 <= k <= len(self.S):
            raise InvalidArgumentError(
                f'k needs to be an integer between 1 and {len(self.S)}, got {k!r}.'
            )

        self.k = int(k)
        self.agency_ids: list[str] = (
            [str(i) for i in range(len(self.S))]
            if agency_ids is None
            else list(agency_ids)
        )
        self.asset_ids: list[str] = (
            [str(i) for i in range(n)] if asset_ids is None else list(asset_ids)
        )
        if len(self.agency_ids) != len(self.S) or len(self.asset_ids) != n:
            raise ShapeError('Agency or asset ids do not match the scores.')

        for array in (self.sigma, self.mu, self.S):
            array.setflags(write=False)

    def __repr__(self) -> str:
        return f'KsumInstance(n={self.n}, m={self.m}, k={self.k})'

    @classmethod
    def from_panel(
        cls, moments: MomentEstimate, panel: NonEsgPanel, k: int
    ) -> 'KsumInstance':
        """Builds an instance from estimated moments and a Non-ESG panel."""

        return cls(
            moments.sigma,
            moments.mu,
            panel.s,
            k,
            agency_ids=panel.agency_ids,
            asset_ids=panel.asset_ids,
        )

    @property
    def n(self) -> int:
        """(`int`): The number of assets."""
        return len(self.mu)

    @property
    def m(self) -> int:
        """(`int`): The number of agencies."""
        return len(self.S)

    def with_k(self, k: int) -> 'KsumInstance':
        """Returns the same instance with another `k`."""

        return KsumInstance(
            self.sigma,
            self.mu,
            self.S,
            k,
            agency_ids=self.agency_ids,
            asset_ids=self.asset_ids,
        )

    def restrict(self, agencies: Sequence[str], k: Optional[int] = None) -> 'KsumInstance':
        """
        Returns the instance with only the rows of `agencies`, in that order.
        `k` defaults to the current one, capped at the new agency count.
        """

        missing = [i for i in agencies if i not in self.agency_ids]
        if missing or not agencies:
            raise InvalidArgumentError(
                f'Unknown or empty agency subset: {", ".join(missing) or "none given"}'
            )
        rows = [self.agency_ids.index(i) for i in agencies]
        return KsumInstance(
            self.sigma,
            self.mu,
            self.S[rows],
            min(self.k, len(rows)) if k is None else k,
            agency_ids=list(agencies),
            asset_ids=self.asset_ids,
        )

    def digest(self) -> str:
        """Returns a SHA-256 of the instance data, for manifests."""

        digest = hashlib.sha256()
        for array in (self.sigma, self.mu, self.S):
            digest.update(np.ascontiguousarray(array).tobytes())
        digest.update(str(self.k).encode())
        return digest.hexdigest()


class VariableLayout:
    """
    The layout of the decision vector `y = (x, v, u)`: `n` weights, `m` excess
    variables and the threshold `u`, in that order.

    Arguments / Attributes:
    * n (`int`): The asset count.
    * m (`int`): The agency count.

    Attributes:
    * x, v (`slice`): The weight and excess blocks.
    * u (`int`): The index of the threshold.
    * dim (`int`): The total dimension, `n + m + 1`.
    """

    __slots__ = ('n', 'm')

    def __init__(self, n: int, m: int):
        self.n = n
        self.m = m

    @classmethod
    def of(cls, instance: KsumInstance) -> 'VariableLayout':
        return cls(instance.n, instance.m)

    @property
    def x(self) -> slice:
        return slice(0, self.n)

    @property
    def v(self) -> slice:
        return slice(self.n, self.n + self.m)

    @property
    def u(self) -> int:
        return self.n + self.m

    @property
    def dim(self) -> int:
        return self.n + self.m + 1

    def split(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        """Returns `(x, v, u)` from a decision vector."""
        return y[self.x], y[self.v], float(y[self.u])

    def kworst_block(self, y: np.ndarray, k: int) -> float:
        """Returns `k u + sum(v)`, the model's own k-Worst score of `y`."""
        return float(k * y[self.u] + np.sum(y[self.v]))


def _weights(instance: KsumInstance, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (instance.n,):
        raise ShapeError(f'Weights have length {len(x)}, expected {instance.n}.')
    return x


def portfolio_scores(instance: KsumInstance, x: np.ndarray) -> np.ndarray:
    """Returns the per-agency Non-ESG scores `S @ x`."""
    return instance.S @ _weights(instance, x)


def kworst_oracle(instance: KsumInstance, x: np.ndarray) -> float:
    """
    Returns the k-Worst Non-ESG score of `x` by definition: the agency scores
    sorted in decreasing order (stable on ties), summed over the first `k`.
    """

    scores = portfolio_scores(instance, x)
    ordered = scores[np.argsort(-scores, kind='stable')]
    return float(np.sum(ordered[: instance.k]))


def kworst_dual_point(
    instance: KsumInstance, x: np.ndarray
) -> tuple[np.ndarray, float]:
    """
    Returns the optimal `(v, u)` of the top-`k` dual LP at a fixed `x`:
    `u` is the `k`-th largest agency score and `v_i = max(0, s^i(x) - u)`.
    """

    scores = portfolio_scores(instance, x)
    u = float(np.sort(scores)[::-1][instance.k - 1])
    return np.maximum(scores - u, 0.0), u


def kworst_dual_value(instance: KsumInstance, x: np.ndarray) -> float:
    """Returns `k u + sum(v)` at the dual optimum of `kworst_dual_point`."""

    v, u = kworst_dual_point(instance, x)
    return float(instance.k * u + np.sum(v))


def _dual_block(instance: KsumInstance) -> tuple[np.ndarray, np.ndarray]:
    # rows s^i'x - v_i - u <= 0
    layout = VariableLayout.of(instance)
    A = np.zeros((instance.m, layout.dim))
    A[:, layout.x] = instance.S
    A[:, layout.v] = -np.eye(instance.m)
    A[:, layout.u] = -1.0
    return A, np.zeros(instance.m)


def _simplex(dim: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    A = np.zeros((1, dim))
    A[0, :n] = 1.0
    return A, np.ones(1)


def _ksum_problem(
    instance: KsumInstance,
    P_x: np.ndarray,
    q: np.ndarray,
    extra_rows: Sequence[tuple[np.ndarray, float]] = (),
) -> QpProblem:
    layout = VariableLayout.of(instance)
    P = np.zeros((layout.dim, layout.dim))
    P[layout.x, layout.x] = P_x

    A_in, b_in = _dual_block(instance)
    if extra_rows:
        A_in = np.vstack([A_in] + [row for row, _ in extra_rows])
        b_in = np.concatenate([b_in, [bound for _, bound in extra_rows]])

    A_eq, b_eq = _simplex(layout.dim, instance.n)
    return QpProblem(
        P, q, A_eq, b_eq, A_in, b_in, lower=np.zeros(layout.dim)
    )


def _return_floor(dim: int, mu: np.ndarray, mu_bar: float) -> tuple[np.ndarray, float]:
    # -mu'x <= -mu_bar
    row = np.zeros(dim)
    row[: len(mu)] = -mu
    return row, -float(mu_bar)


def build_scalarized(instance: KsumInstance, lambdas: Sequence[float]) -> QpProblem:
    """
    Builds the weighted-sum scalarization

        min l1 x'Sx - l2 mu'x + l3 (k u + sum(v))

    over `y = (x, v, u)` under the k-Worst dual rows, the simplex and
    `v, u >= 0`. Since the solver minimizes `1/2 y'Py`, the quadratic block is
    `2 l1 Sigma`.

    Raises:
    * `InvalidArgumentError`: If `lambdas` isn't three nonnegative weights
        with at least one positive.
    """

    lambdas = np.asarray(lambdas, dtype=float).reshape(-1)
    if (
        lambdas.shape != (3,)
        or not np.all(np.isfinite(lambdas))
        or np.any(lambdas < 0)
        or not np.any(lambdas > 0)
    ):
        raise InvalidArgumentError(
            f'Scalarization weights need to be 3 nonnegative numbers, not all '
            f'zero; got {lambdas.tolist()}.'
        )

    l1, l2, l3 = lambdas
    layout = VariableLayout.of(instance)
    q = np.zeros(layout.dim)
    q[layout.x] = -l2 * instance.mu
    q[layout.v] = l3
    q[layout.u] = l3 * instance.k
    return _ksum_problem(instance, 2 * l1 * instance.sigma, q)


def build_single_objective(instance: KsumInstance) -> QpProblem:
    """
    Builds `min x'Sx - mu'x + (k u + sum(v))`: the scalarization with unit
    weights.
    """
    return build_scalarized(instance, (1.0, 1.0, 1.0))


def build_epsilon_constraint(
    instance: KsumInstance, mu_bar: Optional[float], gamma_bar: float
) -> QpProblem:
    """
    Builds `min x'Sx` subject to the return floor `mu'x >= mu_bar` (left out
    when `mu_bar` is `None`), the score ceiling `k u + sum(v) <= gamma_bar`, the
    k-Worst dual rows, the simplex and `v, u >= 0`. Unreachable targets show up
    as an infeasible solve.
    """

    layout = VariableLayout.of(instance)
    ceiling = np.zeros(layout.dim)
    ceiling[layout.v] = 1.0
    ceiling[layout.u] = instance.k
    rows = [] if mu_bar is None else [_return_floor(layout.dim, instance.mu, mu_bar)]
    rows.append((ceiling, float(gamma_bar)))
    return _ksum_problem(instance, 2 * instance.sigma, np.zeros(layout.dim), rows)


def build_min_score(
    instance: KsumInstance, mu_bar: Optional[float] = None
) -> QpProblem:
    """
    Builds the minimum k-Worst score LP `min k u + sum(v)` over the simplex,
    with the return floor `mu'x >= mu_bar` when `mu_bar` is given.
    """

    layout = VariableLayout.of(instance)
    q = np.zeros(layout.dim)
    q[layout.v] = 1.0
    q[layout.u] = instance.k
    rows = [] if mu_bar is None else [_return_floor(layout.dim, instance.mu, mu_bar)]
    return _ksum_problem(instance, np.zeros((instance.n, instance.n)), q, rows)


def build_min_variance(
    sigma: np.ndarray,
    mu: Optional[np.ndarray] = None,
    mu_bar: Optional[float] = None,
) -> QpProblem:
    """
    Builds `min x'Sx` over the long-only simplex in the weights alone, with
    the return floor `mu'x >= mu_bar` when `mu_bar` is given (which needs
    `mu`). Without a floor, this is the Global Minimum Variance portfolio.
    """

    sigma = np.asarray(sigma, dtype=float)
    n = len(sigma)
    A_eq, b_eq = _simplex(n, n)
    A_in = b_in = None
    if mu_bar is not None:
        if mu is None:
            raise InvalidArgumentError('A return floor needs expected returns.')
        mu = np.asarray(mu, dtype=float).reshape(-1)
        if mu.shape != (n,):
            raise ShapeError(f'Returns have length {len(mu)}, expected {n}.')
        row, bound = _return_floor(n, mu, mu_bar)
        A_in, b_in = row[None, :], np.array([bound])
    return QpProblem(
        2 * sigma, np.zeros(n), A_eq, b_eq, A_in, b_in, lower=np.zeros(n)
    )
