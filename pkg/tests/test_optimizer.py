import math

import numpy as np
import pytest

from conftest import small_instance
from hcnas.init import balanced_init, lightest_init
from hcnas.latency import LatencyTable, expected_latency, generate_table
from hcnas.lmo import InfeasibleError
from hcnas.objective import GradSample, ObjectiveSpec, generate_objective
from hcnas.optimizer import (TRACE_HEADER, SolverConfig, bcsfw_search, gd_penalty_search, gd_penalty_toy,
                             parse_schedule, sfw_toy, step_size, toy_start)
from hcnas.project import project_argmax, project_credit
from hcnas.space import ArchParams, DiscreteArch, SpaceSpec, validate


def random_run(seed, iters=60):
    rng = np.random.default_rng(seed)
    S, d, C = int(rng.integers(1, 4)), int(rng.integers(2, 5)), int(rng.integers(2, 7))
    spec = SpaceSpec.uniform(S, d, C)
    table = generate_table(spec, seed=seed)
    kind = "noisy_surrogate" if seed % 3 == 0 else "linear_surrogate"
    obj = generate_objective(spec, table, seed=seed, kind=kind, batch_size=16)
    lo = expected_latency(lightest_init(spec, table), table)
    T = lo * (1 + rng.uniform(0, 1.5)) if seed % 5 else lo
    init = balanced_init(spec, table, T) if seed % 2 else lightest_init(spec, table)
    rule = "alternate" if seed % 4 == 1 else "random"
    cfg = SolverConfig(iters, ["fw4", "fw2", "fixed:0.3"][seed % 3], rule, seed, T)
    return spec, table, obj, init, cfg


def test_schedules():
    assert step_size("fw4", 0) == 1.0
    assert step_size("fw4", 4) == 0.5
    assert step_size("fw2", 2) == 0.5
    assert step_size("fixed:0.25", 100) == 0.25
    assert parse_schedule("fw_classic") == ("fw4", None)
    for bad in ("fixed:1.5", "cosine"):
        with pytest.raises(ValueError):
            parse_schedule(bad)
    with pytest.raises(ValueError):
        SolverConfig(block_rule="cyclic")


@pytest.mark.parametrize("seed", range(30))
def test_anytime_feasibility_and_validity(seed):
    spec, table, obj, init, cfg = random_run(seed)

    def check(t, params, xi, block):
        validate(params, spec)
        assert expected_latency(params, table) <= cfg.budget + 1e-9

    trace = bcsfw_search(init, obj, table, cfg, spec, callback=check)
    assert trace.max_violation() <= 1e-9
    assert len(trace.records) == cfg.max_iters


def test_convex_combination_closure():
    spec, table, obj, init, cfg = random_run(7, iters=40)
    prev = [init.copy()]

    def check(t, params, xi, block):
        old = prev[0]
        gamma = step_size(cfg.step_schedule, t)
        if block == "alpha":
            assert np.array_equal(params.alpha, (1.0 - gamma) * old.alpha + gamma * xi)
            assert np.array_equal(params.beta, old.beta)
        else:
            assert np.array_equal(params.beta, (1.0 - gamma) * old.beta + gamma * xi)
            assert np.array_equal(params.alpha, old.alpha)
        prev[0] = params.copy()

    bcsfw_search(init, obj, table, cfg, spec, callback=check)


def test_zero_gradient_objective_stays_feasible():
    spec, table, _ = small_instance(1)
    T = expected_latency(lightest_init(spec, table), table) * 1.3

    def zero(params, rng):
        return GradSample(0.0, np.zeros_like(params.alpha), np.zeros_like(params.beta))

    trace = bcsfw_search(balanced_init(spec, table, T), zero, table, SolverConfig(100, budget=T), spec)
    assert trace.max_violation() <= 1e-9


def test_infinite_budget_reaches_unconstrained_argmax():
    spec, table, obj = small_instance(3)
    trace = bcsfw_search(ArchParams.uniform(spec), obj, table, SolverConfig(500), spec)
    # best architecture without a budget: per block the top utility, per stage the best depth
    best_cfg = np.argmax(obj.u_alpha, axis=-1)
    block = np.max(obj.u_alpha, axis=-1)
    depth = np.argmax(np.cumsum(block, axis=1) + np.where(spec.depth_mask(), obj.u_beta, -np.inf), axis=1) + 1
    want = DiscreteArch(depth, [best_cfg[s, :k] for s, k in enumerate(depth)])
    assert project_argmax(trace.params, spec) == want
    assert project_credit(trace.params, table, math.inf, spec) == want


def test_initial_point_must_be_feasible():
    spec, table, obj = small_instance(0)
    with pytest.raises(InfeasibleError):
        bcsfw_search(ArchParams.uniform(spec), obj, table, SolverConfig(5, budget=0.1), spec)


def test_determinism_and_csv():
    spec, table, obj, init, cfg = random_run(3)
    a = bcsfw_search(init, obj, table, cfg, spec)
    b = bcsfw_search(init, obj, table, cfg, spec)
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.params.alpha, b.params.alpha)
    lines = a.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(lines) == cfg.max_iters + 1


def test_objective_decreases_on_linear_surrogate():
    spec, table, obj = small_instance(6)
    T = expected_latency(lightest_init(spec, table), table) * 1.4
    trace = bcsfw_search(balanced_init(spec, table, T), obj, table, SolverConfig(300, budget=T), spec)
    assert trace.records[-1].objective < trace.records[0].objective
    assert trace.full_gaps[-1][1] <= trace.full_gaps[0][1]


# toy problem

def test_toy_fw_reaches_optimum_with_exact_sum():
    tr = sfw_toy(10, 200)
    assert abs(tr.objective[-1] - 0.1) <= 1e-3
    assert max(tr.residual) <= 1e-12


def test_toy_fw_same_limit_from_any_start(rng):
    for _ in range(5):
        tr = sfw_toy(10, 200, x0=rng.dirichlet(np.ones(10)))
        assert abs(tr.objective[-1] - 0.1) <= 1e-3


def test_toy_fw_dimension_one():
    tr = sfw_toy(1, 5)
    assert tr.x.tolist() == [1.0]
    assert tr.objective[-1] == 1.0


def test_toy_start_is_on_simplex():
    x = toy_start(10, 4)
    assert abs(x.sum() - 1) < 1e-15 and x.min() > 0


def test_gd_penalized_optimum_residual():
    tr = gd_penalty_toy(10, 1.0, lr=0.05, iters=1000)
    assert tr.residual[-1] > 0
    assert abs(tr.residual[-1] - 1 / 11) <= 1e-6
    # closed form of the penalized optimum: x = lam / (1 + d lam)
    assert np.allclose(tr.x, 1 / 11, atol=1e-9)


def test_gd_limits():
    assert abs(gd_penalty_toy(10, 0.0, lr=0.05, iters=2000).residual[-1] - 1) < 1e-6
    # large lam: the penalized optimum x = lam / (1 + d lam) approaches the constrained one
    big = gd_penalty_toy(10, 100.0, lr=1 / (2 + 2 * 10 * 100.0), iters=20000)
    assert abs(big.residual[-1] - 1 / 1001) < 1e-9
    assert abs(big.objective[-1] - 0.1) < 1e-3


def test_gd_divergence_flag():
    tr = gd_penalty_toy(10, 100.0, lr=0.05, iters=200)
    assert tr.diverged


def test_toy_separation():
    fw = abs(sfw_toy(10, 200).objective[200] - 0.1)
    for lam in (0.1, 1, 10, 100):
        gd = gd_penalty_toy(10, lam, lr=1 / (2 + 20 * lam), iters=200)
        assert fw < abs(gd.objective[200] - 0.1)


def test_penalty_search_violates_budget_with_small_lambda():
    """Utility mass on heavy configs pulls the soft-penalty baseline over the budget."""
    spec = SpaceSpec.uniform(2, 3, 3)
    t = np.broadcast_to(np.array([1.0, 2.0, 3.0]), spec.alpha_shape).copy()
    table = LatencyTable(t)
    u_alpha = np.broadcast_to(np.array([0.0, 1.0, 5.0]), spec.alpha_shape).copy()
    obj = ObjectiveSpec("linear_surrogate", u_alpha, np.zeros(spec.beta_shape))
    T = 6.0
    init = balanced_init(spec, table, T)
    trace = gd_penalty_search(init, obj, table, spec, T, lam=1e-3, lr=0.5, iters=300)
    assert trace.latencies()[-1] > T
    fw = bcsfw_search(init, obj, table, SolverConfig(300, budget=T), spec)
    assert fw.max_violation() <= 1e-9
