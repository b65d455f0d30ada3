import numpy as np
import pytest

from hcnas.latency import generate_table
from hcnas.objective import generate_objective
from hcnas.space import ArchParams, SpaceSpec


def random_params(spec, rng, sparse=False):
    """Random interior (or, with ``sparse``, partly zero) point of the relaxed space."""
    alpha = rng.dirichlet(np.ones(spec.n_configs), size=spec.alpha_shape[:2])
    k = spec.max_depth - spec.min_depth + 1
    beta = np.zeros(spec.beta_shape)
    beta[:, spec.min_depth - 1 :] = rng.dirichlet(np.ones(k), size=spec.num_stages)
    if sparse:
        alpha = np.where(rng.random(alpha.shape) < 0.3, 0.0, alpha)
        alpha[..., 0] += 1e-3
        alpha /= alpha.sum(axis=-1, keepdims=True)
    return ArchParams(alpha, beta)


def small_instance(seed, S=2, d=3, C=3):
    spec = SpaceSpec.uniform(S, d, C)
    table = generate_table(spec, seed=seed)
    objective = generate_objective(spec, table, seed=seed)
    return spec, table, objective


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_spec():
    return SpaceSpec.uniform(2, 3, 3)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
