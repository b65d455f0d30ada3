"""Constrained solvers: block-coordinate stochastic Frank-Wolfe on the
architecture space, the toy Frank-Wolfe / penalized gradient descent pair,
and a penalized softmax-parametrized baseline for the architecture space.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .latency import LatencyTable, alpha_costs, beta_costs, expected_latency
from .lmo import FEAS_TOL, InfeasibleError, lmo_dense
from .objective import GradSample, ObjectiveSpec, surrogate_value_grad, toy_objective
from .space import ArchParams, SpaceSpec

TRACE_HEADER = ("iter", "block", "objective", "latency_ms", "fw_gap", "step_size")
DIVERGENCE_LIMIT = 1e10


class DivergenceError(RuntimeError):
    pass


def parse_schedule(text: str) -> tuple:
    """``fw4`` / ``fw_classic``, ``fw2`` or ``fixed:<gamma>``."""
    if text in ("fw4", "fw_classic"):
        return ("fw4", None)
    if text in ("fw2", "fw_2"):
        return ("fw2", None)
    if text.startswith("fixed:"):
        gamma = float(text.split(":", 1)[1])
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"fixed step must lie in [0, 1], got {gamma}")
        return ("fixed", gamma)
    raise ValueError(f"unknown step schedule {text!r}")


def step_size(schedule: str, t: int) -> float:
    kind, gamma = parse_schedule(schedule)
    if kind == "fw4":
        return 4.0 / (t + 4.0)
    if kind == "fw2":
        return 2.0 / (t + 2.0)
    return gamma


@dataclass
class SolverConfig:
    max_iters: int = 500
    step_schedule: str = "fw4"
    block_rule: str = "random"
    seed: int = 0
    budget: float = math.inf
    tolerance: float = FEAS_TOL
    block_prob: float = 0.5
    full_gap_every: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        parse_schedule(self.step_schedule)
        if self.block_rule not in ("random", "alternate"):
            raise ValueError(f"block_rule must be 'random' or 'alternate', got {self.block_rule!r}")

    def to_json(self) -> dict:
        return {
            "max_iters": self.max_iters,
            "step_schedule": self.step_schedule,
            "block_rule": self.block_rule,
            "seed": self.seed,
            "budget": None if math.isinf(self.budget) else self.budget,
            "tolerance": self.tolerance,
            "block_prob": self.block_prob,
        }


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    block: str
    objective: float
    latency_ms: float
    fw_gap: float
    step_size: float


@dataclass
class SearchTrace:
    records: list = field(default_factory=list)
    params: ArchParams | None = None
    full_gaps: list = field(default_factory=list)
    budget: float = math.inf
    diverged: bool = False

    def latencies(self) -> np.ndarray:
        return np.array([r.latency_ms for r in self.records])

    def max_violation(self) -> float:
        """Largest ``latency - budget`` over the recorded iterates (``-inf`` when empty)."""
        if not self.records or math.isinf(self.budget):
            return -math.inf
        return float(np.max(self.latencies() - self.budget))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([r.iter, r.block, repr(r.objective), repr(r.latency_ms), repr(r.fw_gap), repr(r.step_size)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _as_grad_fn(objective) -> Callable:
    if isinstance(objective, ObjectiveSpec):
        return lambda params, rng: surrogate_value_grad(params, objective, rng)
    return objective


def _block_lmo(block: str, params: ArchParams, grad: GradSample, table: LatencyTable, spec: SpaceSpec,
               budget: float) -> np.ndarray:
    if block == "alpha":
        S, d, C = spec.alpha_shape
        costs = alpha_costs(table, params.beta).reshape(S * d, C)
        xi = lmo_dense(grad.grad_alpha.reshape(S * d, C), costs, np.ones((S * d, C), dtype=bool), budget)
        return xi.reshape(S, d, C)
    costs = beta_costs(table, params.alpha)
    return lmo_dense(grad.grad_beta, costs, spec.depth_mask(), budget)


def fw_gap(params: ArchParams, grad: GradSample, table: LatencyTable, spec: SpaceSpec, budget: float) -> float:
    """Gap of both blocks at ``params``, each against its own feasible set."""
    xa = _block_lmo("alpha", params, grad, table, spec, budget)
    xb = _block_lmo("beta", params, grad, table, spec, budget)
    return float(np.sum((params.alpha - xa) * grad.grad_alpha) + np.sum((params.beta - xb) * grad.grad_beta))


def bcsfw_search(init: ArchParams, objective, table: LatencyTable, cfg: SolverConfig, spec: SpaceSpec,
                 rng: np.random.Generator | None = None, callback: Callable | None = None) -> SearchTrace:
    """Block-coordinate stochastic Frank-Wolfe under the latency budget.

    Each iteration picks the alpha or beta block, draws a fresh stochastic
    gradient, solves the block's linear program over its simplices and the
    latency row induced by the other (fixed) block, and moves toward the
    solution by the scheduled step. Every iterate stays within the budget.

    ``objective`` is an :class:`ObjectiveSpec` or a callable
    ``(params, rng) -> GradSample``. ``callback(t, params, xi, block)`` is
    called after each update.
    """
    T = cfg.budget
    lat0 = expected_latency(init, table)
    if lat0 > T + FEAS_TOL:
        raise InfeasibleError(f"initial point latency {lat0} ms exceeds budget {T} ms", lat0)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    grad_fn = _as_grad_fn(objective)
    params = init.copy()
    trace = SearchTrace(budget=T)

    for t in range(cfg.max_iters):
        if cfg.block_rule == "alternate":
            block = "alpha" if t % 2 == 0 else "beta"
        else:
            block = "alpha" if rng.random() < cfg.block_prob else "beta"
        grad = grad_fn(params, rng)
        xi = _block_lmo(block, params, grad, table, spec, T)
        gamma = step_size(cfg.step_schedule, t)
        if cfg.full_gap_every and t % cfg.full_gap_every == 0:
            trace.full_gaps.append((t, fw_gap(params, grad, table, spec, T)))
        if block == "alpha":
            gap = float(np.sum((params.alpha - xi) * grad.grad_alpha))
            params = ArchParams((1.0 - gamma) * params.alpha + gamma * xi, params.beta)
        else:
            gap = float(np.sum((params.beta - xi) * grad.grad_beta))
            params = ArchParams(params.alpha, (1.0 - gamma) * params.beta + gamma * xi)
        lat = expected_latency(params, table)
        trace.records.append(TraceRecord(t, block, grad.value, lat, gap, gamma))
        if callback is not None:
            callback(t, params, xi, block)
    trace.params = params
    return trace


@dataclass
class ToyTrace:
    method: str
    lam: float | None
    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    penalty: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    x: np.ndarray | None = None
    diverged: bool = False


def toy_start(d: int, seed: int = 0) -> np.ndarray:
    """Random point of the simplex: a uniform random vector, normalized."""
    v = np.random.default_rng(seed).random(d)
    return v / v.sum()


def sfw_toy(d: int, iters: int = 200, schedule: str = "fw4", seed: int = 0, x0=None) -> ToyTrace:
    """Frank-Wolfe for ``min ||x||^2`` over the probability simplex.

    The linear step picks the vertex with the smallest gradient entry; the
    iterate is a convex combination of vertices, so ``sum(x) = 1`` throughout.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    x = toy_start(d, seed) if x0 is None else np.array(x0, dtype=float)
    trace = ToyTrace("fw", None)

    def record(t, x):
        val, _ = toy_objective(x)
        trace.iters.append(t)
        trace.objective.append(val)
        trace.penalty.append(0.0)
        trace.residual.append(abs(float(np.sum(x) - 1.0)))

    record(0, x)
    for t in range(iters):
        _, grad = toy_objective(x)
        xi = np.zeros(d)
        xi[int(np.argmin(grad))] = 1.0
        gamma = step_size(schedule, t)
        x = (1.0 - gamma) * x + gamma * xi
        record(t + 1, x)
    trace.x = x
    return trace


def gd_penalty_toy(d: int, lam: float, lr: float = 0.05, iters: int = 200, seed: int = 0, x0=None) -> ToyTrace:
    """Gradient descent on ``||x||^2 + lam * (sum(x) - 1)^2`` from the same start as :func:`sfw_toy`."""
    if lr <= 0:
        raise ValueError("lr must be positive")
    x = toy_start(d, seed) if x0 is None else np.array(x0, dtype=float)
    trace = ToyTrace("gd", lam)

    def record(t, x):
        val, _ = toy_objective(x)
        r = float(np.sum(x) - 1.0)
        trace.iters.append(t)
        trace.objective.append(val)
        trace.penalty.append(lam * r * r)
        trace.residual.append(abs(r))
        return val + lam * r * r

    record(0, x)
    for t in range(iters):
        _, grad = toy_objective(x)
        grad = grad + 2.0 * lam * (np.sum(x) - 1.0)
        x = x - lr * grad
        total = record(t + 1, x)
        if not np.isfinite(total) or total > DIVERGENCE_LIMIT:
            trace.diverged = True
            break
    trace.x = x
    return trace


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gd_penalty_search(init: ArchParams, objective, table: LatencyTable, spec: SpaceSpec, budget: float,
                      lam: float = 1.0, lr: float = 0.05, iters: int = 500, seed: int = 0) -> SearchTrace:
    """Soft-penalty baseline: gradient descent on per-row softmax logits.

    Minimizes ``objective + lam * max(0, LAT - budget)**2``; the latency
    constraint is only encouraged, never enforced. Zero probabilities in
    ``init`` start at a logit of -30; structurally excluded depths stay at
    ``-inf``.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    rng = np.random.default_rng(seed)
    grad_fn = _as_grad_fn(objective)
    floor = -30.0
    with np.errstate(divide="ignore"):
        la = np.maximum(np.log(init.alpha), floor)
        lb = np.where(spec.depth_mask(), np.maximum(np.log(np.where(init.beta > 0, init.beta, 1e-300)), floor), -np.inf)
    trace = SearchTrace(budget=budget)
    params = init.copy()
    for t in range(iters):
        params = ArchParams(_softmax_rows(la), _softmax_rows(lb))
        g = grad_fn(params, rng)
        lat = expected_latency(params, table)
        over = max(0.0, lat - budget)
        ga = g.grad_alpha + 2.0 * lam * over * alpha_costs(table, params.beta)
        gb = g.grad_beta + 2.0 * lam * over * beta_costs(table, params.alpha)
        ga = params.alpha * (ga - np.sum(params.alpha * ga, axis=-1, keepdims=True))
        gb = params.beta * (gb - np.sum(params.beta * gb, axis=-1, keepdims=True))
        la = la - lr * ga
        lb = np.where(spec.depth_mask(), lb - lr * np.where(spec.depth_mask(), gb, 0.0), -np.inf)
        total = g.value + lam * over * over
        trace.records.append(TraceRecord(t, "joint", g.value, lat, math.nan, lr))
        if not np.isfinite(total) or abs(total) > DIVERGENCE_LIMIT:
            trace.diverged = True
            break
    trace.params = ArchParams(_softmax_rows(la), _softmax_rows(lb))
    return trace
