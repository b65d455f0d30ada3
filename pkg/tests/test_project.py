import math

import numpy as np
import pytest

from conftest import random_params, small_instance
from hcnas.init import balanced_init, lightest_init
from hcnas.latency import LatencyTable, discrete_latency, expected_latency
from hcnas.lmo import InfeasibleError
from hcnas.optimizer import SolverConfig, bcsfw_search
from hcnas.project import (credit, credit_projection, project_argmax, project_credit, project_greedy,
                           sparsity_report)
from hcnas.space import ArchParams, DiscreteArch, SpaceSpec, from_discrete, iter_archs


def test_argmax_rows():
    spec = SpaceSpec.uniform(1, 2, 3, min_depth=1)
    alpha = np.array([[[0.4, 0.35, 0.25], [0.1, 0.2, 0.7]]])
    beta = np.array([[0.3, 0.7]])
    arch = project_argmax(ArchParams(alpha, beta), spec)
    assert arch == DiscreteArch([2], [[0, 2]])


def test_argmax_ties_to_lowest_index():
    spec = SpaceSpec.uniform(1, 2, 2, min_depth=1)
    p = ArchParams(np.full((1, 2, 2), 0.5), np.array([[0.5, 0.5]]))
    assert project_argmax(p, spec) == DiscreteArch([1], [[0]])


def test_one_hot_feasible_input_is_identity():
    spec, table, _ = small_instance(2)
    for arch in list(iter_archs(spec))[::37]:
        T = discrete_latency(arch, table)
        p = from_discrete(arch, spec)
        assert project_credit(p, table, T, spec) == arch
        assert credit_projection(p, table, T, spec).arch == arch


def test_infinite_budget_equals_argmax(rng):
    spec, table, _ = small_instance(4)
    for _ in range(20):
        p = random_params(spec, rng)
        want = project_argmax(p, spec)
        assert project_credit(p, table, math.inf, spec) == want
        assert credit_projection(p, table, math.inf, spec).arch == want


def test_coincides_with_argmax_when_it_fits(rng):
    spec, table, _ = small_instance(5)
    for _ in range(20):
        p = random_params(spec, rng)
        a = project_argmax(p, spec)
        T = max(discrete_latency(a, table), expected_latency(p, table))
        assert project_credit(p, table, T, spec) == a


def test_rejects_infeasible_point(rng):
    spec, table, _ = small_instance(0)
    p = ArchParams.uniform(spec)
    T = expected_latency(p, table) * 0.9
    with pytest.raises(InfeasibleError):
        credit_projection(p, table, T, spec)
    with pytest.raises(InfeasibleError):
        project_greedy(p, table, T, spec)
    # the argmax shortcut still answers when the argmax itself fits
    if discrete_latency(project_argmax(p, spec), table) <= T:
        assert discrete_latency(project_credit(p, table, T, spec), table) <= T


@pytest.mark.parametrize("seed", range(100))
def test_end_to_end_feasible_and_credit(seed):
    rng = np.random.default_rng(seed)
    spec, table, obj = small_instance(seed, S=int(rng.integers(1, 4)), d=int(rng.integers(2, 5)),
                                      C=int(rng.integers(2, 6)))
    lo = expected_latency(lightest_init(spec, table), table)
    T = lo * rng.uniform(1.0, 2.0)
    trace = bcsfw_search(balanced_init(spec, table, T), obj, table, SolverConfig(40, seed=seed, budget=T), spec)
    p = trace.params
    arch = project_credit(p, table, T, spec)
    assert discrete_latency(arch, table) <= T + 1e-9
    g = project_greedy(p, table, T, spec)
    assert discrete_latency(g, table) <= T + 1e-9
    a = project_argmax(p, spec)
    if discrete_latency(a, table) <= T + 1e-9:
        assert credit(arch, p) >= credit(a, p) - 1e-12


@pytest.mark.parametrize("seed", range(60))
def test_internal_lps_have_one_fractional_row(seed):
    rng = np.random.default_rng(1000 + seed)
    spec, table, _ = small_instance(seed, S=3, d=4, C=5)
    p = random_params(spec, rng, sparse=bool(seed % 2))
    lo = expected_latency(lightest_init(spec, table), table)
    T = max(expected_latency(p, table), lo) * rng.uniform(1.0, 1.2)
    res = credit_projection(p, table, T, spec)
    for rep in (res.beta_report, res.alpha_report):
        assert rep["non_one_hot_rows"] <= 1
        assert rep["max_nonzeros"] <= 2


@pytest.mark.parametrize("seed", range(60))
def test_alpha_rounding_loses_at_most_one_row(seed):
    """Rounding the alpha LP costs no more credit than its fractional row carries."""
    rng = np.random.default_rng(2000 + seed)
    spec, table, _ = small_instance(seed, S=2, d=3, C=4)
    p = random_params(spec, rng)
    T = expected_latency(p, table) * rng.uniform(1.0, 1.1)
    res = credit_projection(p, table, T, spec)
    lp_value = float(np.sum(res.alpha_lp * p.alpha))
    onehot = np.zeros_like(p.alpha)
    S, d, C = spec.alpha_shape
    for s in range(S):
        for b in range(d):
            j = res.arch.config[s][b] if b < res.arch.depth[s] else int(np.argmax(res.alpha_lp[s, b]))
            onehot[s, b, j] = 1.0
    rows = res.alpha_report["rows"]
    bound = max((p.alpha.reshape(S * d, C)[r].max() for r in rows), default=0.0)
    assert lp_value - float(np.sum(onehot * p.alpha)) <= bound + 1e-12
    assert discrete_latency(res.arch, table) <= T + 1e-9


def test_argmax_can_violate_budget():
    """Argmax on a feasible mixed point may overshoot; the credit projection does not."""
    spec = SpaceSpec.uniform(1, 2, 2, min_depth=1)
    table = LatencyTable(np.array([[[1.0, 10.0], [1.0, 10.0]]]))
    p = ArchParams(np.array([[[0.45, 0.55], [0.45, 0.55]]]), np.array([[1.0, 0.0]]))
    T = expected_latency(p, table)
    a = project_argmax(p, spec)
    assert discrete_latency(a, table) > T
    arch = project_credit(p, table, T, spec)
    assert discrete_latency(arch, table) <= T + 1e-9
    assert arch == DiscreteArch([1], [[0]])


def test_sparsity_report_counts():
    sol = np.array([[1.0, 0, 0], [0.3, 0.7, 0], [0, 0, 1.0]])
    rep = sparsity_report(sol)
    assert rep == {"non_one_hot_rows": 1, "max_nonzeros": 2, "rows": [1]}
    assert sparsity_report(np.eye(3))["non_one_hot_rows"] == 0


def test_credit_counts_unused_blocks_at_best_entry():
    p = ArchParams(np.array([[[0.2, 0.8], [0.6, 0.4]]]), np.array([[0.9, 0.1]]))
    assert credit(DiscreteArch([1], [[1]]), p) == pytest.approx(0.9 + 0.8 + 0.6)
    assert credit(DiscreteArch([2], [[1, 0]]), p) == pytest.approx(0.1 + 0.8 + 0.6)
