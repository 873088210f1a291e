"""
Brute-force reference implementations the tests compare against. Slow and
obvious on purpose: loops, enumeration and grid search.
"""

import itertools
import math

import numpy as np
import scipy.optimize


def kworst_by_subsets(S: np.ndarray, x: np.ndarray, k: int) -> float:
    # the largest score sum over every choice of k agencies
    scores = [float(row @ x) for row in S]
    return max(sum(c) for c in itertools.combinations(scores, k))


def simplex_qp(P: np.ndarray, q: np.ndarray) -> np.ndarray:
    """
    Minimizes a strictly convex `1/2 x'Px + q'x` over the simplex by solving
    the equality-constrained problem on every face and keeping the best
    feasible one.
    """

    n = len(q)
    best, best_value = None, math.inf
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            support = list(support)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = P[np.ix_(support, support)]
            kkt[:size, size] = 1.0
            kkt[size, :size] = 1.0
            rhs = np.concatenate([-q[support], [1.0]])
            try:
                solved = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.any(solved[:size] < -1e-12):
                continue
            x = np.zeros(n)
            x[support] = np.maximum(solved[:size], 0.0)
            x /= x.sum()
            value = 0.5 * x @ P @ x + q @ x
            if value < best_value:
                best, best_value = x, value
    return best


def minimax_score(S: np.ndarray) -> float:
    """
    `min_x max_i s^i x` over the simplex, as the epigraph LP in `(x, t)`
    handed to HiGHS.
    """

    m, n = S.shape
    result = scipy.optimize.linprog(
        np.concatenate([np.zeros(n), [1.0]]),
        A_ub=np.hstack([S, -np.ones((m, 1))]),
        b_ub=np.zeros(m),
        A_eq=np.concatenate([np.ones(n), [0.0]])[None, :],
        b_eq=[1.0],
        bounds=[(0, None)] * n + [(None, None)],
        method='highs',
    )
    assert result.status == 0, result.message
    return float(result.fun)


def simplex_grid(n: int, step: float):
    """Yields every point of the `n`-asset simplex on a `step` lattice."""

    count = round(1 / step)
    for cut in itertools.combinations(range(count + n - 1), n - 1):
        bounds = (-1,) + cut + (count + n - 1,)
        yield np.array([bounds[i + 1] - bounds[i] - 1 for i in range(n)]) / count


def max_drawdown(wealth: np.ndarray) -> float:
    worst = 0.0
    for t in range(1, len(wealth)):
        peak = max(wealth[: t + 1])
        worst = min(worst, (wealth[t] - peak) / peak)
    return worst


def sample_covariance(returns: np.ndarray) -> np.ndarray:
    T, n = returns.shape
    means = [sum(returns[t][j] for t in range(T)) / T for j in range(n)]
    sigma = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            sigma[i, j] = sum(
                (returns[t][i] - means[i]) * (returns[t][j] - means[j])
                for t in range(T)
            ) / (T - 1)
    return sigma


def euclidean_pairs(S: np.ndarray) -> float:
    values = [
        math.sqrt(sum((a - b) ** 2 for a, b in zip(S[i], S[k])))
        for i in range(len(S))
        for k in range(i + 1, len(S))
    ]
    return sum(values) / len(values)


def random_covariance(rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
    factor = rng.normal(size=(n, n + 2))
    return scale * (factor @ factor.T / (n + 2) + 0.05 * np.eye(n))
