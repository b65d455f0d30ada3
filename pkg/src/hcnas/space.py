"""Search space: micro (per-block configuration) and macro (per-stage depth)
choices, their continuous relaxation, Gumbel-Softmax sampling and counting.

Conventions
-----------
``alpha`` has shape ``(S, d, |C|)`` and ``beta`` has shape ``(S, d)``. Column
``b`` of ``beta`` is the probability that a stage has depth ``b + 1``, so the
entries ``beta[:, :min_depth - 1]`` are structurally zero.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

ROW_TOL = 1e-9
SPACE_VERSION = 1


class SpaceError(ValueError):
    """Base error for search-space inputs."""


class ShapeError(SpaceError):
    """Array shapes do not match the space."""


class InvariantError(SpaceError):
    """A parameter tensor leaves the product of simplices."""

    def __init__(self, kind: str, where: tuple, message: str):
        super().__init__(message)
        self.kind = kind
        self.where = where


class NotDiscreteError(SpaceError):
    """A row is not one-hot."""


@dataclass(frozen=True)
class ConfigLabel:
    id: int
    attrs: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class SpaceSpec:
    num_stages: int
    max_depth: int
    configs: tuple
    min_depth: int = 2

    def __post_init__(self):
        if self.num_stages < 1 or self.max_depth < 1:
            raise SpaceError("num_stages and max_depth must be positive")
        if not 1 <= self.min_depth <= self.max_depth:
            raise SpaceError(f"min_depth must lie in [1, {self.max_depth}], got {self.min_depth}")
        if len(self.configs) == 0:
            raise SpaceError("configs must be nonempty")
        ids = [c.id for c in self.configs]
        if ids != list(range(len(ids))):
            raise SpaceError(f"config ids must equal their positions, got {ids}")

    @classmethod
    def uniform(cls, num_stages: int, max_depth: int, n_configs: int, min_depth: int = 2) -> "SpaceSpec":
        """Space whose configs carry no attributes."""
        return cls(num_stages, max_depth, tuple(ConfigLabel(i) for i in range(n_configs)), min_depth)

    @property
    def n_configs(self) -> int:
        return len(self.configs)

    @property
    def alpha_shape(self) -> tuple:
        return (self.num_stages, self.max_depth, self.n_configs)

    @property
    def beta_shape(self) -> tuple:
        return (self.num_stages, self.max_depth)

    def depth_mask(self) -> np.ndarray:
        """Boolean ``(S, d)`` mask of the depth entries allowed to carry mass."""
        mask = np.zeros(self.beta_shape, dtype=bool)
        mask[:, self.min_depth - 1 :] = True
        return mask

    def to_json(self) -> dict:
        return {
            "version": SPACE_VERSION,
            "stages": self.num_stages,
            "max_depth": self.max_depth,
            "min_depth": self.min_depth,
            "configs": [{"id": c.id, "attrs": dict(c.attrs)} for c in self.configs],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SpaceSpec":
        if doc.get("version") != SPACE_VERSION:
            raise SpaceError(f"unsupported space version {doc.get('version')!r}")
        configs = tuple(ConfigLabel(int(c["id"]), dict(c.get("attrs", {}))) for c in doc["configs"])
        return cls(int(doc["stages"]), int(doc["max_depth"]), configs, int(doc.get("min_depth", 2)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SpaceSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class ArchParams:
    """Continuous architecture parameters ``(alpha, beta)``."""

    alpha: np.ndarray
    beta: np.ndarray

    def copy(self) -> "ArchParams":
        return ArchParams(self.alpha.copy(), self.beta.copy())

    def to_json(self) -> dict:
        return {"version": 1, "alpha": self.alpha.tolist(), "beta": self.beta.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ArchParams":
        return cls(np.asarray(doc["alpha"], dtype=np.float64), np.asarray(doc["beta"], dtype=np.float64))

    @classmethod
    def uniform(cls, spec: SpaceSpec) -> "ArchParams":
        alpha = np.full(spec.alpha_shape, 1.0 / spec.n_configs)
        mask = spec.depth_mask()
        beta = mask / mask.sum(axis=1, keepdims=True)
        return cls(alpha, beta)


@dataclass(frozen=True)
class DiscreteArch:
    """One depth per stage and one config id per active block."""

    depth: tuple
    config: tuple

    def __post_init__(self):
        object.__setattr__(self, "depth", tuple(int(x) for x in self.depth))
        object.__setattr__(self, "config", tuple(tuple(int(c) for c in row) for row in self.config))

    def to_json(self) -> dict:
        return {"depth": list(self.depth), "config": [list(r) for r in self.config]}

    @classmethod
    def from_json(cls, doc: dict) -> "DiscreteArch":
        return cls(doc["depth"], doc["config"])

    def check(self, spec: SpaceSpec) -> None:
        if len(self.depth) != spec.num_stages or len(self.config) != spec.num_stages:
            raise ShapeError(f"architecture has {len(self.depth)} stages, space has {spec.num_stages}")
        for s, (dep, row) in enumerate(zip(self.depth, self.config)):
            if not spec.min_depth <= dep <= spec.max_depth:
                raise SpaceError(f"stage {s}: depth {dep} outside [{spec.min_depth}, {spec.max_depth}]")
            if len(row) != dep:
                raise SpaceError(f"stage {s}: {len(row)} configs for depth {dep}")
            for c in row:
                if not 0 <= c < spec.n_configs:
                    raise SpaceError(f"stage {s}: config id {c} out of range")


@dataclass
class GumbelSample:
    alpha_hat: np.ndarray
    beta_hat: np.ndarray


def validate(params: ArchParams, spec: SpaceSpec) -> None:
    """Raise if ``params`` is not a point of the relaxed space.

    Shape problems raise :class:`ShapeError`; the first violated invariant
    raises :class:`InvariantError` whose ``kind`` is one of ``"negative"``,
    ``"min depth"`` or ``"row sum"``.
    """
    alpha = np.asarray(params.alpha)
    beta = np.asarray(params.beta)
    if alpha.shape != spec.alpha_shape:
        raise ShapeError(f"alpha shape {alpha.shape} != {spec.alpha_shape}")
    if beta.shape != spec.beta_shape:
        raise ShapeError(f"beta shape {beta.shape} != {spec.beta_shape}")
    for name, arr in (("alpha", alpha), ("beta", beta)):
        if not np.all(np.isfinite(arr)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            raise InvariantError("negative", bad, f"{name}{list(bad)} is not finite")
        if np.any(arr < 0):
            bad = tuple(int(i) for i in np.argwhere(arr < 0)[0])
            raise InvariantError("negative", bad, f"{name}{list(bad)} is negative")
    if spec.min_depth > 1 and np.any(beta[:, : spec.min_depth - 1] != 0):
        bad = tuple(int(i) for i in np.argwhere(beta[:, : spec.min_depth - 1] != 0)[0])
        raise InvariantError("min depth", bad, f"beta{list(bad)} must be 0 below min_depth={spec.min_depth}")
    asum = alpha.sum(axis=-1)
    if np.any(np.abs(asum - 1) > ROW_TOL):
        bad = tuple(int(i) for i in np.argwhere(np.abs(asum - 1) > ROW_TOL)[0])
        raise InvariantError("row sum", bad, f"alpha row {list(bad)} sums to {asum[bad]!r}")
    bsum = beta.sum(axis=-1)
    if np.any(np.abs(bsum - 1) > ROW_TOL):
        bad = tuple(int(i) for i in np.argwhere(np.abs(bsum - 1) > ROW_TOL)[0])
        raise InvariantError("row sum", bad, f"beta row {list(bad)} sums to {bsum[bad]!r}")


def is_valid(params: ArchParams, spec: SpaceSpec) -> bool:
    try:
        validate(params, spec)
    except SpaceError:
        return False
    return True


def count_space(spec: SpaceSpec) -> int:
    """Exact number of discrete architectures."""
    per_stage = sum(spec.n_configs**b for b in range(spec.min_depth, spec.max_depth + 1))
    return per_stage**spec.num_stages


def _gumbel_rows(probs: np.ndarray, temperature: float, hard: bool, rng) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    support = probs > 0
    if np.any(~support.any(axis=-1)):
        bad = tuple(int(i) for i in np.argwhere(~support.any(axis=-1))[0])
        raise SpaceError(f"degenerate row {list(bad)}: no positive probability")
    u = rng.random(probs.shape)
    g = -np.log(-np.log(u))
    with np.errstate(divide="ignore"):
        logits = np.where(support, (np.log(probs) + g) / temperature, -np.inf)
    if hard:
        out = np.zeros_like(probs)
        np.put_along_axis(out, np.argmax(logits, axis=-1)[..., None], 1.0, axis=-1)
        return out
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_sample(params: ArchParams, temperature: float = 1.0, mode: str = "soft", rng=None) -> GumbelSample:
    """Draw one Gumbel-Softmax relaxed (``soft``) or one-hot (``hard``) sample.

    Noise is ``-log(-log U)``; zero-probability entries get no mass.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if mode not in ("soft", "hard"):
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
    rng = np.random.default_rng() if rng is None else rng
    hard = mode == "hard"
    a = _gumbel_rows(params.alpha, temperature, hard, rng)
    b = _gumbel_rows(params.beta, temperature, hard, rng)
    return GumbelSample(a, b)


def sample_hard_batch(params: ArchParams, n: int, rng) -> tuple:
    """``n`` hard samples as index arrays ``(depth (n, S), config (n, S, d))``.

    Equivalent to ``n`` calls of ``gumbel_sample(..., mode="hard")`` (the
    Gumbel-max argmax is an exact categorical draw) but vectorized.
    """
    alpha = np.asarray(params.alpha)
    beta = np.asarray(params.beta)
    with np.errstate(divide="ignore"):
        la = np.log(alpha)
        lb = np.log(beta)
    ga = -np.log(-np.log(rng.random((n,) + alpha.shape)))
    gb = -np.log(-np.log(rng.random((n,) + beta.shape)))
    config = np.argmax(la + ga, axis=-1)
    depth = np.argmax(lb + gb, axis=-1) + 1
    return depth.astype(np.int64), config.astype(np.int64)


def to_discrete(params: ArchParams, tol: float = ROW_TOL) -> DiscreteArch:
    """Read a one-hot point back as a :class:`DiscreteArch`."""
    alpha = np.asarray(params.alpha)
    beta = np.asarray(params.beta)

    def onehot_index(row, name):
        j = int(np.argmax(row))
        expect = np.zeros_like(row)
        expect[j] = 1.0
        if np.max(np.abs(row - expect)) > tol:
            raise NotDiscreteError(f"{name} is not one-hot: {row.tolist()}")
        return j

    depth = []
    config = []
    for s in range(beta.shape[0]):
        dep = onehot_index(beta[s], f"beta row {s}") + 1
        depth.append(dep)
        for b in range(alpha.shape[1]):
            onehot_index(alpha[s, b], f"alpha row ({s}, {b})")
        config.append([int(np.argmax(alpha[s, b])) for b in range(dep)])
    return DiscreteArch(depth, config)


def from_discrete(arch: DiscreteArch, spec: SpaceSpec) -> ArchParams:
    """One-hot parameters for ``arch``; inactive blocks take config 0."""
    arch.check(spec)
    alpha = np.zeros(spec.alpha_shape)
    alpha[..., 0] = 1.0
    beta = np.zeros(spec.beta_shape)
    for s, (dep, row) in enumerate(zip(arch.depth, arch.config)):
        beta[s, dep - 1] = 1.0
        for b, c in enumerate(row):
            alpha[s, b] = 0.0
            alpha[s, b, c] = 1.0
    return ArchParams(alpha, beta)


def arch_to_indices(archs: Sequence[DiscreteArch], spec: SpaceSpec) -> tuple:
    """Pack architectures into ``(depth (n, S), config (n, S, d))`` index arrays."""
    n = len(archs)
    depth = np.zeros((n, spec.num_stages), dtype=np.int64)
    config = np.zeros((n, spec.num_stages, spec.max_depth), dtype=np.int64)
    for i, a in enumerate(archs):
        depth[i] = a.depth
        for s, row in enumerate(a.config):
            config[i, s, : len(row)] = row
    return depth, config


def stage_options(spec: SpaceSpec) -> list:
    """Every ``(depth, configs)`` choice for one stage, in lexicographic order."""
    out = []
    for dep in range(spec.min_depth, spec.max_depth + 1):
        for combo in itertools.product(range(spec.n_configs), repeat=dep):
            out.append((dep, combo))
    return out


def iter_archs(spec: SpaceSpec) -> Iterator[DiscreteArch]:
    """All architectures ordered by (stage depths, then config ids)."""
    depths = range(spec.min_depth, spec.max_depth + 1)
    for dvec in itertools.product(depths, repeat=spec.num_stages):
        per_stage = [itertools.product(range(spec.n_configs), repeat=d) for d in dvec]
        for combo in itertools.product(*[list(p) for p in per_stage]):
            yield DiscreteArch(dvec, combo)


def arch_to_json_str(arch: DiscreteArch) -> str:
    return json.dumps(arch.to_json(), separators=(",", ":"))


def load_json(path) -> Any:
    with open(path) as fh:
        return json.load(fh)
