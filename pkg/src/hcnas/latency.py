"""Latency tables, the bilinear latency form and its evaluation."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import kernels
from .space import ArchParams, DiscreteArch, ShapeError, SpaceSpec, arch_to_indices

TABLE_VERSION = 1


class TableError(ValueError):
    """Base error for latency-table inputs."""


class TableParseError(TableError):
    pass


class NegativeLatencyError(TableError):
    pass


class TableShapeError(TableError, ShapeError):
    pass


class NonMonotoneWarning(UserWarning):
    """Per-block latencies are not sorted by config index."""


@dataclass
class LatencyTable:
    """Per-(stage, block, config) latency ``t`` in milliseconds."""

    t: np.ndarray
    device_name: str = "synthetic"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        if self.t.ndim != 3:
            raise TableShapeError(f"latency table must be 3-D [S][d][|C|], got shape {self.t.shape}")
        if not np.all(np.isfinite(self.t)):
            raise TableParseError("latency table contains non-finite entries")
        if np.any(self.t < 0):
            bad = tuple(int(i) for i in np.argwhere(self.t < 0)[0])
            raise NegativeLatencyError(f"negative latency {self.t[bad]} at {list(bad)}")

    def check(self, spec: SpaceSpec) -> None:
        if self.t.shape != spec.alpha_shape:
            raise TableShapeError(f"table shape {self.t.shape} != space shape {spec.alpha_shape}")

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.t, axis=-1) >= 0))

    def to_json(self) -> dict:
        doc = {"version": TABLE_VERSION, "device": self.device_name, "t": self.t.tolist()}
        if self.metadata:
            doc["metadata"] = self.metadata
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "LatencyTable":
        if not isinstance(doc, dict) or "t" not in doc:
            raise TableParseError("latency table JSON must be an object with a 't' field")
        if doc.get("version", TABLE_VERSION) != TABLE_VERSION:
            raise TableParseError(f"unsupported table version {doc.get('version')!r}")
        try:
            t = np.asarray(doc["t"], dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise TableParseError(f"ragged or non-numeric latency table: {exc}") from exc
        return cls(t, str(doc.get("device", "")), dict(doc.get("metadata", {})))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


def load_table(path, spec: SpaceSpec | None = None) -> LatencyTable:
    """Read and validate a latency table JSON file.

    Raises :class:`TableParseError`, :class:`NegativeLatencyError` or
    :class:`TableShapeError`. Warns with :class:`NonMonotoneWarning` when
    configs are not latency-sorted within a block.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise TableParseError(f"{path}: {exc}") from exc
    table = LatencyTable.from_json(doc)
    if spec is not None:
        table.check(spec)
    if not table.is_monotone():
        warnings.warn(f"{path}: per-block latencies are not monotone in config index", NonMonotoneWarning)
    return table


@dataclass
class ThetaMatrix:
    """Sparse ``(S*d*|C|, S*d)`` matrix with ``alpha.ravel() @ theta @ beta.ravel() == LAT``."""

    theta: sparse.csr_matrix
    shape3: tuple

    def dense(self) -> np.ndarray:
        return self.theta.toarray()

    def alpha_costs(self, beta: np.ndarray) -> np.ndarray:
        """Knapsack costs of the alpha block for fixed ``beta``: ``Theta @ beta``."""
        return (self.theta @ np.asarray(beta).ravel()).reshape(self.shape3)

    def beta_costs(self, alpha: np.ndarray) -> np.ndarray:
        """Knapsack costs of the beta block for fixed ``alpha``: ``Theta.T @ alpha``."""
        S, d, _ = self.shape3
        return (self.theta.T @ np.asarray(alpha).ravel()).reshape(S, d)

    def latency(self, params: ArchParams) -> float:
        return float(params.alpha.ravel() @ (self.theta @ params.beta.ravel()))


def build_theta(table: LatencyTable, spec: SpaceSpec) -> ThetaMatrix:
    table.check(spec)
    S, d, C = spec.alpha_shape
    rows, cols, vals = [], [], []
    for s in range(S):
        for b in range(d):
            for c in range(C):
                r = (s * d + b) * C + c
                for bp in range(b, d):
                    rows.append(r)
                    cols.append(s * d + bp)
                    vals.append(table.t[s, b, c])
    theta = sparse.csr_matrix((vals, (rows, cols)), shape=(S * d * C, S * d))
    return ThetaMatrix(theta, (S, d, C))


def tail_mass(beta: np.ndarray) -> np.ndarray:
    """``P(depth >= b + 1)`` per stage: reverse cumulative sum of ``beta``."""
    return np.cumsum(np.asarray(beta)[:, ::-1], axis=1)[:, ::-1]


def alpha_costs(table: LatencyTable, beta: np.ndarray) -> np.ndarray:
    """Expected latency contributed by each (s, b, c) for fixed ``beta``."""
    return table.t * tail_mass(beta)[:, :, None]


def beta_costs(table: LatencyTable, alpha: np.ndarray) -> np.ndarray:
    """Latency of a stage at each depth for fixed ``alpha`` (prefix sums of block latencies)."""
    block = np.einsum("sbc,sbc->sb", np.asarray(alpha), table.t)
    return np.cumsum(block, axis=1)


def expected_latency(params: ArchParams, table: LatencyTable) -> float:
    """Expected latency of the architecture distribution, in ms."""
    alpha = np.asarray(params.alpha)
    beta = np.asarray(params.beta)
    if alpha.shape != table.t.shape or beta.shape != table.t.shape[:2]:
        raise TableShapeError(f"params shapes {alpha.shape}/{beta.shape} vs table {table.t.shape}")
    per_stage = np.sum(beta_costs(table, alpha) * beta, axis=1)
    total = 0.0
    for v in per_stage:  # stage by stage, like discrete_latency, so one-hot points agree exactly
        total += v
    return float(total)


def expected_latency_direct(params: ArchParams, table: LatencyTable) -> float:
    """Literal quadruple sum over stages, depths, blocks and configs."""
    alpha, beta, t = params.alpha, params.beta, table.t
    S, d, C = t.shape
    total = 0.0
    for s in range(S):
        for bp in range(d):
            for b in range(bp + 1):
                for c in range(C):
                    total += alpha[s, b, c] * t[s, b, c] * beta[s, bp]
    return total


def discrete_latency(arch: DiscreteArch, table: LatencyTable) -> float:
    total = 0.0
    for s, row in enumerate(arch.config):
        stage = 0.0
        for b, c in enumerate(row[: arch.depth[s]]):
            stage += table.t[s, b, c]
        total += stage
    return float(total)


def batch_discrete_latency(depth: np.ndarray, config: np.ndarray, table: LatencyTable) -> np.ndarray:
    """Latency of many architectures given as index arrays (see ``sample_hard_batch``)."""
    return kernels.prefix_gather_sum(depth, config, table.t)


def archs_latency(archs, table: LatencyTable, spec: SpaceSpec) -> np.ndarray:
    depth, config = arch_to_indices(archs, spec)
    return batch_discrete_latency(depth, config, table)


def generate_table(spec: SpaceSpec, seed: int = 0, base_ms: float = 1.0, noise: float = 0.05,
                   device: str = "synthetic") -> LatencyTable:
    """Seeded synthetic table, nondecreasing in config index within each block.

    Per-config cost grows with the ``er``, ``k`` and ``se`` attributes when
    present, otherwise with the config index. Stage scale and multiplicative
    noise vary per (stage, block); sorting restores monotonicity.
    """
    rng = np.random.default_rng(seed)
    S, d, C = spec.alpha_shape
    nominal = np.empty(C)
    for c, cfg in enumerate(spec.configs):
        a = cfg.attrs
        if {"er", "k"} <= set(a):
            se = a.get("se", False)
            se = 1.0 if se in (True, "on", 1) else 0.0
            nominal[c] = float(a["er"]) * (float(a["k"]) ** 2) / 27.0 * (1.0 + 0.15 * se)
        else:
            nominal[c] = 1.0 + 0.5 * c
    stage_scale = rng.uniform(0.6, 1.6, size=S)
    t = base_ms * stage_scale[:, None, None] * nominal[None, None, :]
    t = t * rng.uniform(1 - noise, 1 + noise, size=(S, d, C))
    t = np.sort(t, axis=-1)
    return LatencyTable(np.round(t, 6), device, {"seed": seed, "generator": "hcnas.synthetic"})


def default_configs() -> list:
    """The 12 (expansion ratio, kernel, squeeze-excite) triplets, in nominal-latency order."""
    raw = [(er, k, se) for er in (3, 4, 6) for k in (3, 5) for se in ("off", "on")]
    raw.sort(key=lambda x: (x[0] * x[1] ** 2 * (1.15 if x[2] == "on" else 1.0), x))
    return [{"er": er, "k": k, "se": se} for er, k, se in raw]
