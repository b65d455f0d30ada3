import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from hcnas.lmo import (InfeasibleError, McKpInstance, UnboundedError, lmo_dense, mckp_as_lp, reference_lp,
                       solve_mckp_greedy, solve_reference, solve_relaxed_mckp)


def random_instance(rng, max_groups=6, max_items=5, ties=False):
    k = int(rng.integers(1, max_groups + 1))
    groups = []
    for _ in range(k):
        n = int(rng.integers(1, max_items + 1))
        if ties:
            groups.append([(float(rng.integers(0, 4)), float(rng.integers(0, 4))) for _ in range(n)])
        else:
            groups.append([(float(rng.normal()), float(rng.uniform(0, 3))) for _ in range(n)])
    lo = sum(min(c for _, c in g) for g in groups)
    hi = sum(max(c for _, c in g) for g in groups)
    return McKpInstance(tuple(groups), float(lo + rng.uniform(0, 1) * (hi - lo)))


def integral_values(inst):
    for combo in itertools.product(*[range(len(g)) for g in inst.groups]):
        cost = sum(inst.groups[i][j][1] for i, j in enumerate(combo))
        if cost <= inst.budget + 1e-9:
            yield sum(inst.groups[i][j][0] for i, j in enumerate(combo))


def check_structure(point):
    frac = point.fractional_groups()
    assert len(frac) <= 1
    for i in frac:
        assert np.count_nonzero(point.weights[i]) <= 2


def test_two_group_fractional_example():
    inst = McKpInstance((((0, 1), (10, 5)), ((0, 1), (10, 5))), 6)
    point = solve_relaxed_mckp(inst)
    _, ref = solve_reference(inst)
    hi = linprog(-np.array([0, 10, 0, 10]), A_eq=[[1, 1, 0, 0], [0, 0, 1, 1]], b_eq=[1, 1],
                 A_ub=[[1, 5, 1, 5]], b_ub=[6]).fun
    assert inst.value(point.weights) == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(-hi, abs=1e-9)
    assert ref == pytest.approx(10.0)
    assert inst.cost(point.weights) <= 6 + 1e-9


def test_slack_budget_takes_argmax_per_group():
    inst = McKpInstance((((1, 1), (3, 2), (3, 9)), ((5, 1), (2, 1))), np.inf)
    point = solve_relaxed_mckp(inst)
    assert point.choice() == [1, 0]
    assert point.fractional_groups() == []


def test_zero_costs_min_sense():
    values = np.array([[3.0, 1.0, 2.0], [0.5, 0.5, -1.0]])
    w = lmo_dense(values, np.zeros_like(values), np.ones_like(values, dtype=bool), 0.0, sense="min")
    assert w.tolist() == [[0, 1, 0], [0, 0, 1]]


def test_mask_excludes_items():
    values = np.array([[5.0, 1.0, 0.0]])
    costs = np.array([[0.0, 1.0, 2.0]])
    w = lmo_dense(values, costs, np.array([[False, True, True]]), 10.0, sense="max")
    assert w.tolist() == [[0, 1, 0]]


def test_infeasible_budget():
    inst = McKpInstance((((1, 2), (2, 3)), ((0, 2),)), 3.5)
    with pytest.raises(InfeasibleError) as err:
        solve_relaxed_mckp(inst)
    assert err.value.min_cost == pytest.approx(4.0)
    with pytest.raises(InfeasibleError):
        solve_mckp_greedy(inst)


def test_integral_lp_solution_is_kept_by_greedy():
    inst = McKpInstance((((0, 1), (4, 2), (5, 4)), ((0, 0), (3, 1))), 3)
    point = solve_relaxed_mckp(inst)
    assert point.fractional_groups() == []
    assert solve_mckp_greedy(inst) == point.choice()


def test_greedy_continues_past_blocked_group():
    # the best-ratio upgrade of group 0 does not fit, group 1's smaller upgrade still does
    inst = McKpInstance((((0, 0), (10, 5)), ((0, 0), (1, 1))), 2)
    assert solve_mckp_greedy(inst) == [0, 1]


def test_reference_lp_small_cases():
    assert reference_lp([1, 1], A_eq=[[1, 1]], b_eq=[1]).objective == pytest.approx(1.0)
    tied = reference_lp([1, 1, 2], A_eq=[[1, 1, 1]], b_eq=[1])
    assert tied.objective == pytest.approx(1.0)
    with pytest.raises(InfeasibleError):
        reference_lp([1, 1], A_eq=[[1, 1]], b_eq=[1], A_ub=[[1, 1]], b_ub=[0.5])
    with pytest.raises(UnboundedError):
        reference_lp([-1, 0], A_eq=[[0, 1]], b_eq=[1])


def test_reference_lp_matches_scipy(rng):
    for _ in range(30):
        inst = random_instance(rng)
        c, A_eq, b_eq, A_ub, b_ub = mckp_as_lp(inst)
        ours = reference_lp(c, A_eq, b_eq, A_ub, b_ub).objective
        theirs = linprog(c, A_ub, b_ub, A_eq, b_eq, method="highs").fun
        assert ours == pytest.approx(theirs, abs=1e-7)


@pytest.mark.parametrize("seed", range(50))
def test_specialized_matches_reference(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, ties=seed % 5 == 0)
    for sense in ("max", "min"):
        point = solve_relaxed_mckp(inst, sense)
        _, ref = solve_reference(inst, sense)
        assert inst.value(point.weights) == pytest.approx(ref, abs=1e-9)
        assert inst.cost(point.weights) <= inst.budget + 1e-9
        check_structure(point)


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ties=st.booleans())
def test_lp_bounds_integral_and_greedy(seed, ties):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 5, 4, ties)
    point = solve_relaxed_mckp(inst)
    lp = inst.value(point.weights)
    check_structure(point)
    assert inst.cost(point.weights) <= inst.budget + 1e-9
    best_int = max(integral_values(inst))
    assert best_int <= lp + 1e-9
    choice = solve_mckp_greedy(inst)
    cost = sum(inst.groups[i][j][1] for i, j in enumerate(choice))
    value = sum(inst.groups[i][j][0] for i, j in enumerate(choice))
    assert cost <= inst.budget + 1e-9
    assert value <= lp + 1e-9


def test_deterministic_output(rng):
    inst = random_instance(rng, ties=True)
    a = solve_relaxed_mckp(inst)
    b = solve_relaxed_mckp(inst)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


def test_ties_break_to_lowest_index():
    inst = McKpInstance((((1, 1), (1, 1), (1, 1)),), 5)
    assert solve_relaxed_mckp(inst).weights[0].tolist() == [1, 0, 0]


def test_instance_validation():
    with pytest.raises(ValueError):
        McKpInstance(((),), 1.0)
    with pytest.raises(ValueError):
        McKpInstance((((1, -1),),), 1.0)
