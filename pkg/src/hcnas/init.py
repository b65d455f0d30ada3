"""Feasible starting points for the constrained search.

``lightest_init`` is the cheapest architecture as a one-hot point.
``balanced_init`` spreads probability as evenly as the budget allows by
alternately solving, for beta then alpha, the QP

    min  sum over rows of sum_k (x[k+1] - x[k])**2
    s.t. each row on its simplex, total latency <= T

with the other block held fixed. Each block QP is separable across rows
except for the single latency row, so it is solved through its Lagrangian:
rows are solved exactly by a small active-set method for a given multiplier
``lam`` and ``lam`` is found by bisection on the (monotone) latency.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .latency import LatencyTable, alpha_costs, beta_costs, expected_latency
from .lmo import FEAS_TOL, InfeasibleError
from .space import ArchParams, SpaceSpec


def lightest_init(spec: SpaceSpec, table: LatencyTable) -> ArchParams:
    """One-hot point at the cheapest config of every block and depth ``min_depth``."""
    table.check(spec)
    alpha = np.zeros(spec.alpha_shape)
    idx = np.argmin(table.t, axis=-1)
    np.put_along_axis(alpha, idx[..., None], 1.0, axis=-1)
    beta = np.zeros(spec.beta_shape)
    beta[:, spec.min_depth - 1] = 1.0
    return ArchParams(alpha, beta)


def chain_objective(x: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Sum of squared differences between consecutive allowed entries of each row."""
    x = np.asarray(x).reshape(-1, np.shape(x)[-1])
    if mask is None:
        return float(np.sum(np.diff(x, axis=-1) ** 2))
    mask = np.asarray(mask).reshape(x.shape)
    return float(sum(np.sum(np.diff(row[m]) ** 2) for row, m in zip(x, mask)))


def init_objective(params: ArchParams, spec: SpaceSpec) -> float:
    return chain_objective(params.alpha) + chain_objective(params.beta, spec.depth_mask())


def _chain_hessian(n: int) -> np.ndarray:
    D = np.diff(np.eye(n), axis=0)
    return 2.0 * D.T @ D


def solve_row_qp(H: np.ndarray, q: np.ndarray, x0: np.ndarray | None = None, max_iter: int = 500) -> np.ndarray:
    """Minimize ``0.5 x'Hx + q'x`` on the probability simplex (primal active set)."""
    n = q.size
    if n == 1:
        return np.ones(1)
    if np.all(q == q[0]):
        # constant shift on the simplex: the uniform point is optimal
        return np.full(n, 1.0 / n)
    x = np.full(n, 1.0 / n) if x0 is None else np.array(x0, dtype=float)
    working = x <= 0.0
    x[working] = 0.0
    for _ in range(max_iter):
        free = ~working
        F = np.flatnonzero(free)
        k = F.size
        K = np.zeros((k + 1, k + 1))
        K[:k, :k] = H[np.ix_(F, F)]
        K[:k, k] = 1.0
        K[k, :k] = 1.0
        rhs = np.concatenate([-q[F], [1.0]])
        sol = np.linalg.solve(K, rhs)
        target = np.zeros(n)
        target[F] = sol[:k]
        p = target - x
        if np.max(np.abs(p)) <= 1e-15:
            grad = H @ x + q
            nu = -sol[k]
            mult = grad - nu
            mult[free] = 0.0
            if not working.any() or mult[working].min() >= -1e-14:
                return x
            j = int(np.argmin(np.where(working, mult, np.inf)))
            working[j] = False
            continue
        step = 1.0
        block = -1
        for j in F:
            if p[j] < 0:
                r = -x[j] / p[j]
                if r < step:
                    step, block = r, j
        x = x + step * p
        if block >= 0:
            x[block] = 0.0
            working[block] = True
        x = np.maximum(x, 0.0)
    raise RuntimeError("row QP active-set iteration limit reached")


@dataclass
class BlockQPResult:
    x: np.ndarray
    multiplier: float


def solve_block_qp(costs: np.ndarray, mask: np.ndarray, budget: float, x0: np.ndarray | None = None,
                   rel_tol: float = 1e-14) -> BlockQPResult:
    """Chain-smoothness QP over a product of simplices under one latency row.

    ``costs`` and ``mask`` are ``(rows, items)``; entries outside ``mask``
    are fixed at zero and excluded from the chain.
    """
    costs = np.asarray(costs, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    rows = costs.shape[0]
    supports = [np.flatnonzero(mask[r]) for r in range(rows)]
    hess = {}
    for sup in supports:
        hess.setdefault(sup.size, _chain_hessian(sup.size))

    def solve(lam, start=None):
        x = np.zeros_like(costs)
        for r, sup in enumerate(supports):
            x_start = None if start is None else start[r, sup]
            if x_start is not None and not np.isclose(x_start.sum(), 1.0):
                x_start = None
            x[r, sup] = solve_row_qp(hess[sup.size], lam * costs[r, sup], x_start)
        return x

    def cost(x):
        return float(np.sum(costs * x))

    slack = 1e-12 * max(1.0, abs(budget))

    x = solve(0.0, x0)
    if cost(x) <= budget + slack:
        return BlockQPResult(x, 0.0)
    min_cost = sum(costs[r, sup].min() for r, sup in enumerate(supports))
    if min_cost > budget + FEAS_TOL:
        raise InfeasibleError(f"budget {budget} below minimal achievable cost {min_cost}", min_cost)
    if cost(x) - min_cost <= slack:
        # the unconstrained optimum is already as cheap as the block allows
        return BlockQPResult(x, 0.0)

    # a budget within rounding of the cheapest cost is treated as the cheapest cost
    target = budget if budget - min_cost > slack else min_cost + slack
    scale = max(float(np.abs(costs[mask]).max()), 1e-300)
    lo, hi = 0.0, 1.0 / scale
    x_hi = solve(hi, x)
    while cost(x_hi) > target and hi < 1e12 / scale:
        lo = hi
        hi *= 4.0
        x_hi = solve(hi, x_hi)
    if cost(x_hi) > target:
        # budget sits at the cheapest cost up to rounding: mix toward the cheapest vertex
        cheap = np.zeros_like(costs)
        for r, sup in enumerate(supports):
            cheap[r, sup[np.argmin(costs[r, sup])]] = 1.0
        c_hi, c_cheap = cost(x_hi), cost(cheap)
        theta = 1.0
        if c_hi - c_cheap > 0 and target > c_cheap:
            theta = float(np.clip((c_hi - target) / (c_hi - c_cheap), 0.0, 1.0))
        return BlockQPResult((1 - theta) * x_hi + theta * cheap, hi)
    x_lo = None
    for _ in range(400):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        x_mid = solve(mid, x_hi if x_lo is None else x_lo)
        if cost(x_mid) > target:
            lo, x_lo = mid, x_mid
        else:
            hi, x_hi = mid, x_mid
    return BlockQPResult(x_hi, hi)


@dataclass
class BalancedInitResult:
    params: ArchParams
    rounds: int
    objective: float
    alpha_multiplier: float
    beta_multiplier: float
    alpha_costs: np.ndarray | None = None
    beta_costs: np.ndarray | None = None


def balanced_init_details(spec: SpaceSpec, table: LatencyTable, T: float, tol: float = 1e-10,
                          max_rounds: int = 50) -> BalancedInitResult:
    """Balanced point with the multipliers and costs of the last beta and alpha QPs."""
    table.check(spec)
    light = lightest_init(spec, table)
    light_lat = expected_latency(light, table)
    if light_lat > T + FEAS_TOL:
        raise InfeasibleError(f"budget {T} ms below minimal achievable latency {light_lat} ms", light_lat)
    alpha, beta = light.alpha.copy(), light.beta.copy()
    depth_mask = spec.depth_mask()
    alpha_mask = np.ones((spec.num_stages * spec.max_depth, spec.n_configs), dtype=bool)
    prev = init_objective(light, spec)
    lam_a = lam_b = 0.0
    cost_a = cost_b = None
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        cost_b = beta_costs(table, alpha)
        res_b = solve_block_qp(cost_b, depth_mask, T)
        beta, lam_b = res_b.x, res_b.multiplier
        cost_a = alpha_costs(table, beta)
        res_a = solve_block_qp(cost_a.reshape(-1, spec.n_configs), alpha_mask, T,
                               x0=alpha.reshape(-1, spec.n_configs))
        alpha, lam_a = res_a.x.reshape(spec.alpha_shape), res_a.multiplier
        obj = init_objective(ArchParams(alpha, beta), spec)
        if prev - obj < tol:
            prev = obj
            break
        prev = obj
    return BalancedInitResult(ArchParams(alpha, beta), rounds, prev, lam_a, lam_b, cost_a, cost_b)


def balanced_init(spec: SpaceSpec, table: LatencyTable, T: float, tol: float = 1e-10) -> ArchParams:
    """Feasible point closest to uniform in the chain-smoothness sense, beta first."""
    return balanced_init_details(spec, table, T, tol).params
