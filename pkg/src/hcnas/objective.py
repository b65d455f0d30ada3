"""Differentiable objectives standing in for the supernet validation loss.

Every objective is minimized. The surrogates negate an architecture score
whose block utilities accumulate over active blocks exactly like latency
does, so the score of a one-hot point equals ``discrete_score``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .latency import LatencyTable, tail_mass
from .space import ArchParams, DiscreteArch, SpaceSpec

KINDS = ("toy_quadratic", "linear_surrogate", "noisy_surrogate")


@dataclass
class ObjectiveSpec:
    kind: str
    u_alpha: np.ndarray | None = None
    u_beta: np.ndarray | None = None
    noise_sd: float = 0.01
    batch_size: int = 64
    temperature: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.kind != "toy_quadratic":
            self.u_alpha = np.asarray(self.u_alpha, dtype=np.float64)
            self.u_beta = np.asarray(self.u_beta, dtype=np.float64)
            if not (np.all(np.isfinite(self.u_alpha)) and np.all(np.isfinite(self.u_beta))):
                raise ValueError("utilities must be finite")
            if self.u_alpha.ndim != 3 or self.u_beta.shape != self.u_alpha.shape[:2]:
                raise ValueError(f"utility shapes {self.u_alpha.shape} / {self.u_beta.shape} do not match")

    def to_json(self) -> dict:
        doc = {"kind": self.kind, "noise_sd": self.noise_sd, "batch_size": self.batch_size}
        if self.temperature != 1.0:
            doc["temperature"] = self.temperature
        if self.u_alpha is not None:
            doc["u_alpha"] = self.u_alpha.tolist()
            doc["u_beta"] = self.u_beta.tolist()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ObjectiveSpec":
        return cls(
            kind=doc["kind"],
            u_alpha=doc.get("u_alpha"),
            u_beta=doc.get("u_beta"),
            noise_sd=float(doc.get("noise_sd", 0.01)),
            batch_size=int(doc.get("batch_size", 64)),
            temperature=float(doc.get("temperature", 1.0)),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ObjectiveSpec":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class GradSample:
    value: float
    grad_alpha: np.ndarray
    grad_beta: np.ndarray


def toy_objective(x):
    """Squared norm and its gradient."""
    x = np.asarray(x, dtype=np.float64)
    return float(x @ x), 2.0 * x


def linear_value_grad(params: ArchParams, spec: ObjectiveSpec) -> GradSample:
    alpha, beta = params.alpha, params.beta
    block = np.einsum("sbc,sbc->sb", alpha, spec.u_alpha)
    per_stage = np.sum(np.cumsum(block, axis=1) * beta + beta * spec.u_beta, axis=1)
    total = 0.0
    for v in per_stage:  # stage by stage, matching discrete_score exactly on one-hot points
        total += v
    value = -float(total)
    grad_alpha = -spec.u_alpha * tail_mass(beta)[:, :, None]
    grad_beta = -(np.cumsum(block, axis=1) + spec.u_beta)
    return GradSample(value, grad_alpha, grad_beta)


def _relaxed_jacobian_ratio(probs, g, temperature):
    """``soft / probs`` for the Gumbel-Softmax map, finite on zero entries when the temperature is 1."""
    support = probs > 0
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    z = np.where(support, (logp + g) / temperature, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
    soft = np.exp(z - lse)
    safe_logp = np.where(support, logp, 0.0)
    ratio = np.where(support, np.exp(np.where(support, z - lse - safe_logp, 0.0)), 0.0)
    if temperature == 1.0:
        ratio = np.where(support, ratio, np.exp(g - lse))
    return soft, ratio


def noisy_value_grad(params: ArchParams, spec: ObjectiveSpec, rng) -> GradSample:
    """Batch estimate from hard Gumbel samples with a straight-through gradient.

    The value averages the negated scores of ``batch_size`` hard samples plus
    Gaussian noise. The gradient of each sample is the surrogate's partial
    derivative at the hard sample, chained through the soft relaxation's
    Jacobian with respect to the probabilities.
    """
    alpha, beta = params.alpha, params.beta
    B, tau = spec.batch_size, spec.temperature
    ga = -np.log(-np.log(rng.random((B,) + alpha.shape)))
    gb = -np.log(-np.log(rng.random((B,) + beta.shape)))
    noise = rng.normal(0.0, spec.noise_sd, size=B) if spec.noise_sd > 0 else np.zeros(B)

    soft_a, ratio_a = _relaxed_jacobian_ratio(alpha[None], ga, tau)
    soft_b, ratio_b = _relaxed_jacobian_ratio(beta[None], gb, tau)
    with np.errstate(divide="ignore"):
        cfg = np.argmax(np.log(alpha)[None] + ga, axis=-1)
        dep_idx = np.argmax(np.log(beta)[None] + gb, axis=-1)
    depth = dep_idx + 1

    score = kernels.prefix_gather_sum(depth, cfg, spec.u_alpha)
    score = score + np.take_along_axis(spec.u_beta[None], dep_idx[..., None], axis=-1)[..., 0].sum(axis=1)
    value = float(np.mean(-score + noise))

    S, d, _ = alpha.shape
    active = (np.arange(d)[None, None, :] < depth[:, :, None]).astype(float)  # (B, S, d)
    h_a = -spec.u_alpha[None] * active[..., None]
    u_hard = np.take_along_axis(np.broadcast_to(spec.u_alpha, (B,) + spec.u_alpha.shape), cfg[..., None], axis=-1)[..., 0]
    h_b = -(np.cumsum(u_hard, axis=-1) + spec.u_beta[None])

    def chain(h, soft, ratio):
        centered = h - np.sum(soft * h, axis=-1, keepdims=True)
        return (ratio * centered / tau).mean(axis=0)

    return GradSample(value, chain(h_a, soft_a, ratio_a), chain(h_b, soft_b, ratio_b))


def surrogate_value_grad(params: ArchParams, spec: ObjectiveSpec, rng=None) -> GradSample:
    if spec.kind == "linear_surrogate":
        return linear_value_grad(params, spec)
    if spec.kind == "noisy_surrogate":
        rng = np.random.default_rng() if rng is None else rng
        return noisy_value_grad(params, spec, rng)
    raise ValueError(f"{spec.kind!r} is not an architecture surrogate")


def discrete_score(arch: DiscreteArch, spec: ObjectiveSpec) -> float:
    total = 0.0
    for s, row in enumerate(arch.config):
        stage = 0.0
        for b, c in enumerate(row[: arch.depth[s]]):
            stage += spec.u_alpha[s, b, c]
        total += stage + spec.u_beta[s, arch.depth[s] - 1]
    return float(total)


def batch_discrete_score(depth: np.ndarray, config: np.ndarray, spec: ObjectiveSpec) -> np.ndarray:
    score = kernels.prefix_gather_sum(depth, config, spec.u_alpha)
    return score + np.take_along_axis(spec.u_beta[None], (depth - 1)[..., None], axis=-1)[..., 0].sum(axis=1)


def generate_objective(spec: SpaceSpec, table: LatencyTable | None = None, seed: int = 0,
                       kind: str = "linear_surrogate", noise_sd: float = 0.01,
                       batch_size: int = 64) -> ObjectiveSpec:
    """Seeded synthetic utilities.

    Block utilities grow sublinearly with the block's latency (diminishing
    returns on heavier configs) with per-entry noise; depth utilities are
    small noise. Without a table the config index stands in for latency.
    """
    rng = np.random.default_rng(seed)
    S, d, C = spec.alpha_shape
    if table is not None:
        base = np.sqrt(table.t / max(float(table.t.mean()), 1e-12))
    else:
        base = np.broadcast_to(np.sqrt(1.0 + np.arange(C)), (S, d, C)).copy()
    scale = rng.uniform(0.5, 1.5, size=(S, d, 1))
    u_alpha = scale * base + 0.1 * rng.normal(size=(S, d, C))
    u_beta = 0.05 * rng.normal(size=(S, d))
    u_beta[:, : spec.min_depth - 1] = 0.0
    return ObjectiveSpec(kind, np.round(u_alpha, 6), np.round(u_beta, 6), noise_sd, batch_size)
