"""Brute-force ground truth on small spaces and rank statistics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .latency import LatencyTable, batch_discrete_latency, discrete_latency
from .objective import ObjectiveSpec, batch_discrete_score
from .space import DiscreteArch, SpaceSpec, count_space

MAX_ENUMERATION = 10**6


class SpaceTooLargeError(ValueError):
    def __init__(self, count: int):
        super().__init__(f"space has {count} architectures, more than {MAX_ENUMERATION} to enumerate")
        self.count = count


class UndefinedCorrelationError(ValueError):
    pass


@dataclass
class EnumerationResult:
    """Every architecture of a space with its latency and score.

    Architectures are stored as index arrays and materialized on demand by
    :meth:`arch`; ``archs`` builds the full list.
    """

    spec: SpaceSpec
    depth: np.ndarray
    config: np.ndarray
    latency: np.ndarray
    score: np.ndarray
    budget: float = math.inf

    def __len__(self) -> int:
        return len(self.latency)

    def arch(self, i: int) -> DiscreteArch:
        dep = self.depth[i]
        return DiscreteArch(dep, [self.config[i, s, :k] for s, k in enumerate(dep)])

    @property
    def archs(self) -> list:
        return [self.arch(i) for i in range(len(self))]

    def feasible(self, T: float | None = None) -> np.ndarray:
        T = self.budget if T is None else T
        return self.latency <= T + 1e-9

    def best_feasible(self, T: float | None = None) -> int:
        """Index of the highest-score architecture within budget (first on ties)."""
        ok = self.feasible(T)
        if not ok.any():
            return -1
        masked = np.where(ok, self.score, -np.inf)
        return int(np.argmax(masked))

    def index_of(self, arch: DiscreteArch) -> int:
        dep = np.asarray(arch.depth)
        hit = np.all(self.depth == dep, axis=1)
        for s, row in enumerate(arch.config):
            hit &= np.all(self.config[:, s, : len(row)] == np.asarray(row, dtype=np.int64), axis=1)
        idx = np.flatnonzero(hit)
        if idx.size != 1:
            raise KeyError(f"architecture {arch} not found in enumeration")
        return int(idx[0])


def enumerate_space(spec: SpaceSpec, table: LatencyTable, objective: ObjectiveSpec | None = None,
                    T: float = math.inf) -> EnumerationResult:
    """All architectures ordered by (stage depths, then config ids)."""
    n = count_space(spec)
    if n > MAX_ENUMERATION:
        raise SpaceTooLargeError(n)
    S, d, C = spec.alpha_shape
    depth = np.zeros((n, S), dtype=np.int64)
    config = np.zeros((n, S, d), dtype=np.int64)
    pos = 0
    for dvec in itertools.product(range(spec.min_depth, spec.max_depth + 1), repeat=S):
        stage_rows = [np.array(list(itertools.product(range(C), repeat=k)), dtype=np.int64) for k in dvec]
        sizes = [len(r) for r in stage_rows]
        m = int(np.prod(sizes))
        grids = np.meshgrid(*[np.arange(k) for k in sizes], indexing="ij")
        depth[pos : pos + m] = dvec
        for s, (rows, grid) in enumerate(zip(stage_rows, grids)):
            config[pos : pos + m, s, : dvec[s]] = rows[grid.ravel()]
        pos += m
    latency = batch_discrete_latency(depth, config, table)
    score = batch_discrete_score(depth, config, objective) if objective is not None else np.zeros(n)
    return EnumerationResult(spec, depth, config, latency, score, T)


def rank_correlation(x, y) -> tuple:
    """Kendall tau-b and Spearman rho."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("inputs must be 1-D of equal length >= 2")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("rank correlation is undefined for constant input")
    tau = stats.kendalltau(x, y, variant="b").statistic
    rho = stats.spearmanr(x, y).statistic
    return float(tau), float(rho)


@dataclass
class GapStats:
    score: float
    best_score: float
    normalized_gap: float
    percentile: float
    feasible: bool


def optimality_gap(found: DiscreteArch, enum: EnumerationResult, objective: ObjectiveSpec | None = None,
                   table: LatencyTable | None = None, T: float | None = None) -> GapStats:
    """Score shortfall of ``found`` against the best feasible architecture.

    ``normalized_gap`` is ``(best - found) / (best - worst)`` over feasible
    architectures; ``percentile`` is the share of feasible architectures
    scoring at most as well as ``found``, in percent.
    """
    T = enum.budget if T is None else T
    i = enum.index_of(found)
    score = float(enum.score[i])
    lat = float(enum.latency[i]) if table is None else discrete_latency(found, table)
    ok = enum.feasible(T)
    feas_scores = enum.score[ok]
    best = float(feas_scores.max())
    worst = float(feas_scores.min())
    span = best - worst
    gap = 0.0 if span == 0 else (best - score) / span
    pct = 100.0 * float(np.mean(feas_scores <= score + 1e-12))
    return GapStats(score, best, gap, pct, lat <= T + 1e-9)
