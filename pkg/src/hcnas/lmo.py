"""Linear minimization over one coordinate block: the relaxed multiple-choice
knapsack LP, an integral greedy variant and a dense simplex reference solver.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

FEAS_TOL = kernels.FEAS_TOL


class InfeasibleError(ValueError):
    """The budget is below the cheapest achievable cost."""

    def __init__(self, message: str, min_cost: float):
        super().__init__(message)
        self.min_cost = min_cost


class UnboundedError(ValueError):
    pass


@dataclass(frozen=True)
class McKpInstance:
    """Groups of ``(value, cost)`` items and one knapsack budget."""

    groups: tuple
    budget: float

    def __post_init__(self):
        groups = tuple(tuple((float(v), float(c)) for v, c in g) for g in self.groups)
        if any(len(g) == 0 for g in groups):
            raise ValueError("every group must be nonempty")
        for g in groups:
            for _, c in g:
                if not np.isfinite(c) or c < 0:
                    raise ValueError(f"item costs must be finite and nonnegative, got {c}")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_dense(cls, values, costs, budget, mask=None) -> "McKpInstance":
        values = np.asarray(values, dtype=float)
        costs = np.asarray(costs, dtype=float)
        mask = np.ones(values.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        groups = [[(values[i, j], costs[i, j]) for j in range(values.shape[1]) if mask[i, j]]
                  for i in range(values.shape[0])]
        return cls(tuple(groups), float(budget))

    def dense(self) -> tuple:
        """Padded ``(values, costs, mask)`` arrays."""
        n = max(len(g) for g in self.groups)
        k = len(self.groups)
        values = np.zeros((k, n))
        costs = np.zeros((k, n))
        mask = np.zeros((k, n), dtype=bool)
        for i, g in enumerate(self.groups):
            for j, (v, c) in enumerate(g):
                values[i, j], costs[i, j], mask[i, j] = v, c, True
        return values, costs, mask

    def min_cost(self) -> float:
        return sum(min(c for _, c in g) for g in self.groups)

    def value(self, weights) -> float:
        return float(sum(v * w for g, wg in zip(self.groups, weights) for (v, _), w in zip(g, wg)))

    def cost(self, weights) -> float:
        return float(sum(c * w for g, wg in zip(self.groups, weights) for (_, c), w in zip(g, wg)))


@dataclass
class SimplexPoint:
    """Per-group weights; each group sums to one."""

    weights: list

    def fractional_groups(self) -> list:
        return [i for i, w in enumerate(self.weights) if np.count_nonzero(w) > 1]

    def choice(self) -> list:
        """Index of the largest weight per group."""
        return [int(np.argmax(w)) for w in self.weights]


def lmo_dense(values, costs, mask, budget: float, sense: str = "min") -> np.ndarray:
    """Solve the relaxed MCKP on padded arrays; returns the ``(groups, items)`` weights.

    This is the hot-loop entry point used by the solvers.
    """
    if sense not in ("min", "max"):
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
    values = np.asarray(values, dtype=np.float64)
    if sense == "min":
        values = -values
    weights, status, min_cost = kernels.relaxed_mckp(values, costs, mask, float(budget))
    if status:
        raise InfeasibleError(f"budget {budget} below minimal achievable cost {min_cost}", min_cost)
    return weights


def solve_relaxed_mckp(inst: McKpInstance, sense: str = "max") -> SimplexPoint:
    """Optimal vertex of the LP relaxation.

    At most one group is fractional and it has at most two nonzero weights.
    Ties are broken toward the lowest item index.
    """
    values, costs, mask = inst.dense()
    w = lmo_dense(values, costs, mask, inst.budget, sense)
    return SimplexPoint([w[i, : len(g)].copy() for i, g in enumerate(inst.groups)])


def _hull(values, costs):
    order = sorted(range(len(values)), key=lambda j: (costs[j], -values[j], j))
    front = []
    for j in order:
        if not front or values[j] > values[front[-1]]:
            front.append(j)
    hull = []
    for j in front:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (costs[b] - costs[a]) * (values[j] - values[a]) - (values[b] - values[a]) * (costs[j] - costs[a]) >= 0:
                hull.pop()
            else:
                break
        hull.append(j)
    return hull


def solve_mckp_greedy(inst: McKpInstance, sense: str = "max") -> list:
    """Integral greedy: one item per group, never over budget.

    Upgrades along each group's efficient frontier are taken in order of
    decreasing value-per-cost; the first one that does not fit is skipped
    together with the rest of its group, and the scan continues with the
    remaining groups.
    """
    if sense not in ("min", "max"):
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
    sign = 1.0 if sense == "max" else -1.0
    min_cost = inst.min_cost()
    if min_cost > inst.budget + FEAS_TOL:
        raise InfeasibleError(f"budget {inst.budget} below minimal achievable cost {min_cost}", min_cost)
    hulls = []
    upgrades = []
    spent = 0.0
    for i, g in enumerate(inst.groups):
        vals = [sign * v for v, _ in g]
        costs = [c for _, c in g]
        h = _hull(vals, costs)
        hulls.append(h)
        spent += costs[h[0]]
        for k in range(len(h) - 1):
            dc = costs[h[k + 1]] - costs[h[k]]
            dv = vals[h[k + 1]] - vals[h[k]]
            upgrades.append((-(dv / dc), i, k, dc))
    upgrades.sort(key=lambda u: (u[0], u[1], u[2]))
    level = [0] * len(inst.groups)
    blocked = set()
    remaining = inst.budget - spent
    for _, i, k, dc in upgrades:
        if i in blocked or level[i] != k:
            continue
        if dc <= remaining:
            level[i] = k + 1
            remaining -= dc
        else:
            blocked.add(i)
    return [hulls[i][level[i]] for i in range(len(inst.groups))]


@dataclass
class LPResult:
    x: np.ndarray
    objective: float


def reference_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, tol: float = 1e-11,
                 max_iter: int = 10_000) -> LPResult:
    """Dense two-phase tableau simplex with Bland's rule.

    Solves ``min c @ x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub`` and
    ``x >= 0``. Intended as a test oracle for small problems.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    m_eq, m_ub = A_eq.shape[0], A_ub.shape[0]
    m = m_eq + m_ub

    # columns: x (n), slacks (m_ub), artificials (m)
    A = np.zeros((m, n + m_ub))
    A[:m_eq, :n] = A_eq
    A[m_eq:, :n] = A_ub
    A[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    n_tot = n + m_ub + m
    T = np.zeros((m + 1, n_tot + 1))
    T[:m, : n + m_ub] = A
    T[:m, n + m_ub : n_tot] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n + m_ub, n_tot))

    def pivot(r, col):
        T[r] /= T[r, col]
        for i in range(T.shape[0]):
            if i != r and T[i, col] != 0:
                T[i] -= T[i, col] * T[r]
        basis[r] = col

    def run(allowed):
        for _ in range(max_iter):
            reduced = T[-1, :-1]
            enter = next((j for j in range(n_tot) if allowed[j] and reduced[j] < -tol), None)
            if enter is None:
                return
            col = T[:m, enter]
            rows = [i for i in range(m) if col[i] > tol]
            if not rows:
                raise UnboundedError("linear program is unbounded")
            ratios = [T[i, -1] / col[i] for i in rows]
            best = min(ratios)
            leave = min((i for i, r in zip(rows, ratios) if r <= best + tol), key=lambda i: basis[i])
            pivot(leave, enter)
        raise RuntimeError("simplex iteration limit reached")

    # phase 1: minimize the sum of artificials
    T[-1, :] = 0.0
    T[-1, n + m_ub : n_tot] = 1.0
    for i in range(m):
        T[-1] -= T[i]
    run(np.ones(n_tot, dtype=bool))
    if -T[-1, -1] > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
        raise InfeasibleError("linear program is infeasible", float("nan"))
    # drive remaining artificials out of the basis
    for r in range(m):
        if basis[r] >= n + m_ub:
            cand = [j for j in range(n + m_ub) if abs(T[r, j]) > 1e-9]
            if cand:
                pivot(r, cand[0])
    # phase 2
    allowed = np.zeros(n_tot, dtype=bool)
    allowed[: n + m_ub] = True
    T[-1, :] = 0.0
    T[-1, :n] = c
    for r in range(m):
        if basis[r] < n_tot and T[-1, basis[r]] != 0:
            T[-1] -= T[-1, basis[r]] * T[r]
    run(allowed)
    x = np.zeros(n_tot)
    for r in range(m):
        x[basis[r]] = T[r, -1]
    x = x[:n]
    return LPResult(x, float(c @ x))


def mckp_as_lp(inst: McKpInstance, sense: str = "max") -> tuple:
    """Standard-form ``(c, A_eq, b_eq, A_ub, b_ub)`` of the relaxed MCKP (minimization)."""
    vals = np.array([v for g in inst.groups for v, _ in g])
    costs = np.array([c for g in inst.groups for _, c in g])
    c = -vals if sense == "max" else vals
    A_eq = np.zeros((len(inst.groups), vals.size))
    pos = 0
    for i, g in enumerate(inst.groups):
        A_eq[i, pos : pos + len(g)] = 1.0
        pos += len(g)
    return c, A_eq, np.ones(len(inst.groups)), costs[None, :], np.array([inst.budget])


def solve_reference(inst: McKpInstance, sense: str = "max") -> tuple:
    """Relaxed MCKP through :func:`reference_lp`; returns ``(SimplexPoint, objective)``."""
    c, A_eq, b_eq, A_ub, b_ub = mckp_as_lp(inst, sense)
    if not np.isfinite(inst.budget):
        A_ub, b_ub = None, None
    res = reference_lp(c, A_eq, b_eq, A_ub, b_ub)
    weights = []
    pos = 0
    for g in inst.groups:
        weights.append(res.x[pos : pos + len(g)].copy())
        pos += len(g)
    obj = -res.objective if sense == "max" else res.objective
    return SimplexPoint(weights), obj
