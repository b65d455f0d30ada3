"""Discretization of a continuous architecture point.

``project_argmax`` takes each row's argmax and may overshoot the budget.
``project_credit`` maximizes the credit (inner product with the converged
point) under the budget through two relaxed knapsack LPs, beta first with
the continuous alpha, then alpha against the discrete beta, and resolves the
single fractional row each LP may leave.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .latency import LatencyTable, alpha_costs, beta_costs, discrete_latency, expected_latency
from .lmo import FEAS_TOL, InfeasibleError, McKpInstance, lmo_dense, solve_mckp_greedy
from .space import ArchParams, DiscreteArch, SpaceSpec


def project_argmax(params: ArchParams, spec: SpaceSpec) -> DiscreteArch:
    """Per-row argmax, ties to the lowest index. No feasibility guarantee."""
    beta = np.where(spec.depth_mask(), params.beta, -np.inf)
    depth = np.argmax(beta, axis=1) + 1
    cfg = np.argmax(params.alpha, axis=-1)
    return DiscreteArch(depth, [cfg[s, :dep] for s, dep in enumerate(depth)])


def credit(arch: DiscreteArch, params: ArchParams) -> float:
    """Inner product of the one-hot architecture with ``params``.

    Blocks beyond a stage's depth do not affect the architecture, so their
    rows are counted at their best entry (what the unconstrained alpha LP
    picks for zero-cost rows).
    """
    total = 0.0
    for s, dep in enumerate(arch.depth):
        total += params.beta[s, dep - 1]
        for b in range(params.alpha.shape[1]):
            if b < dep:
                total += params.alpha[s, b, arch.config[s][b]]
            else:
                total += params.alpha[s, b].max()
    return float(total)


def sparsity_report(solution: np.ndarray, mask: np.ndarray | None = None) -> dict:
    """Count non-one-hot rows of an LP solution and their largest support."""
    sol = np.asarray(solution)
    sol = sol.reshape(-1, sol.shape[-1])
    if mask is not None:
        sol = np.where(np.asarray(mask).reshape(sol.shape), sol, 0.0)
    nnz = np.count_nonzero(sol > 0, axis=1)
    frac = nnz > 1
    return {
        "non_one_hot_rows": int(frac.sum()),
        "max_nonzeros": int(nnz[frac].max()) if frac.any() else 1,
        "rows": [int(i) for i in np.flatnonzero(frac)],
    }


def _resolve_row(row_weights: np.ndarray, values: np.ndarray, row_costs: np.ndarray, spare: float) -> int:
    """Pick one of the (at most two) supported entries of a fractional row.

    ``spare`` is the budget left for this row once every other row is
    fixed. The feasible entry with the larger value wins; if none fits, the
    cheaper one is returned.
    """
    options = [int(j) for j in np.flatnonzero(row_weights > 0)]
    feasible = [j for j in options if row_costs[j] <= spare + FEAS_TOL]
    if feasible:
        return max(feasible, key=lambda j: (values[j], -j))
    return min(options, key=lambda j: (row_costs[j], j))


@dataclass
class ProjectionResult:
    arch: DiscreteArch
    beta_lp: np.ndarray
    alpha_lp: np.ndarray
    beta_report: dict = field(default_factory=dict)
    alpha_report: dict = field(default_factory=dict)
    shortcut: bool = False


def credit_projection(params: ArchParams, table: LatencyTable, T: float, spec: SpaceSpec) -> ProjectionResult:
    """Credit-maximizing projection with its internal LP solutions."""
    lat = expected_latency(params, table)
    if lat > T + FEAS_TOL:
        raise InfeasibleError(f"params latency {lat} ms exceeds budget {T} ms", lat)
    mask_b = spec.depth_mask()
    S, d, C = spec.alpha_shape

    # beta LP against the continuous alpha
    cb = beta_costs(table, params.alpha)
    beta_lp = lmo_dense(params.beta, cb, mask_b, T, sense="max")
    depth_idx = np.argmax(beta_lp, axis=1)
    fr = [s for s in range(S) if np.count_nonzero(beta_lp[s] > 0) > 1]
    for s in fr:
        fixed = sum(cb[r, depth_idx[r]] for r in range(S) if r != s)
        depth_idx[s] = _resolve_row(beta_lp[s], params.beta[s], cb[s], T - fixed)
    beta_disc = np.zeros((S, d))
    beta_disc[np.arange(S), depth_idx] = 1.0

    # alpha LP against the discrete beta
    ca = alpha_costs(table, beta_disc).reshape(S * d, C)
    alpha_lp = lmo_dense(params.alpha.reshape(S * d, C), ca, np.ones((S * d, C), dtype=bool), T, sense="max")
    cfg = np.argmax(alpha_lp, axis=1)
    fr = [r for r in range(S * d) if np.count_nonzero(alpha_lp[r] > 0) > 1]
    for r in fr:
        fixed = sum(ca[q, cfg[q]] for q in range(S * d) if q != r)
        cfg[r] = _resolve_row(alpha_lp[r], params.alpha.reshape(S * d, C)[r], ca[r], T - fixed)
    cfg = cfg.reshape(S, d)
    depth = depth_idx + 1
    arch = DiscreteArch(depth, [cfg[s, :dep] for s, dep in enumerate(depth)])
    return ProjectionResult(
        arch,
        beta_lp,
        alpha_lp.reshape(S, d, C),
        sparsity_report(beta_lp, mask_b),
        sparsity_report(alpha_lp),
    )


def project_credit(params: ArchParams, table: LatencyTable, T: float, spec: SpaceSpec) -> DiscreteArch:
    """Feasible discrete architecture of (near) maximal credit.

    When the argmax architecture already fits the budget it is returned
    unchanged: it maximizes credit over all discrete architectures.
    """
    arch = project_argmax(params, spec)
    if discrete_latency(arch, table) <= T + FEAS_TOL:
        return arch
    return credit_projection(params, table, T, spec).arch


def project_greedy(params: ArchParams, table: LatencyTable, T: float, spec: SpaceSpec) -> DiscreteArch:
    """Integral variant: the greedy MCKP solver for beta, then for alpha."""
    lat = expected_latency(params, table)
    if lat > T + FEAS_TOL:
        raise InfeasibleError(f"params latency {lat} ms exceeds budget {T} ms", lat)
    S, d, C = spec.alpha_shape
    mask_b = spec.depth_mask()
    cb = beta_costs(table, params.alpha)
    inst = McKpInstance.from_dense(params.beta, cb, T, mask_b)
    offset = spec.min_depth - 1
    depth_idx = np.array(solve_mckp_greedy(inst, "max")) + offset
    beta_disc = np.zeros((S, d))
    beta_disc[np.arange(S), depth_idx] = 1.0
    ca = alpha_costs(table, beta_disc).reshape(S * d, C)
    inst = McKpInstance.from_dense(params.alpha.reshape(S * d, C), ca, T)
    cfg = np.array(solve_mckp_greedy(inst, "max")).reshape(S, d)
    depth = depth_idx + 1
    return DiscreteArch(depth, [cfg[s, :dep] for s, dep in enumerate(depth)])
