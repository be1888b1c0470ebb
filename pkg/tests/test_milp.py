import itertools

import numpy as np
import pytest

from gridres.errors import NodeBudgetError
from gridres.solvers.instances import MilpInstance
from gridres.solvers.milp import solve_milp


def test_integral_relaxation_returned_unchanged():
    inst = MilpInstance(
        objective=[-1.0],
        lower=[0.0],
        upper=[4.0],
        integer_mask=[True],
    )
    res = solve_milp(inst)
    assert res.status == "optimal"
    assert res.x[0] == 4.0
    assert res.nodes == 1
    assert res.branch_log == []


def test_no_integer_mask_is_plain_lp():
    inst = MilpInstance(objective=[1.0], lower=[0.25], upper=[9.0])
    res = solve_milp(inst)
    assert res.x[0] == pytest.approx(0.25)


def _brute_force_binary(weights, budget):
    k = weights.size
    best, best_x = np.inf, None
    for bits in itertools.product([0, 1], repeat=k):
        x = np.array(bits, dtype=float)
        if x.sum() > budget + 1e-9:
            continue
        val = float(weights @ x)
        if val < best - 1e-12:
            best, best_x = val, x
    return best, best_x


def test_budget_selection_matches_subset_enumeration():
    rng = np.random.default_rng(77)
    for trial in range(50):
        k = int(rng.integers(3, 7))
        budget = int(rng.integers(1, k))
        weights = -rng.uniform(0.0, 5.0, size=k)  # minimize -> pick most valuable
        inst = MilpInstance(
            objective=weights,
            ineq_matrix=np.ones((1, k)),
            ineq_rhs=[float(budget)],
            lower=np.zeros(k),
            upper=np.ones(k),
            integer_mask=np.ones(k, dtype=bool),
        )
        res = solve_milp(inst)
        oracle, _ = _brute_force_binary(weights, budget)
        assert res.status == "optimal"
        assert res.objective == pytest.approx(oracle, abs=1e-6)


def _brute_force_box(c, a_ub, b_ub, upper):
    grids = [range(int(u) + 1) for u in upper]
    best = np.inf
    for point in itertools.product(*grids):
        x = np.array(point, dtype=float)
        if np.all(a_ub @ x <= b_ub + 1e-9):
            best = min(best, float(c @ x))
    return best


def test_random_integer_boxes_match_grid_enumeration():
    rng = np.random.default_rng(99)
    for trial in range(25):
        n = 3
        c = rng.normal(size=n)
        a = rng.uniform(-1, 2, size=(2, n))
        upper = np.full(n, 3.0)
        b = a @ (upper / 2) + rng.uniform(0.5, 2.0, size=2)
        inst = MilpInstance(
            objective=c,
            ineq_matrix=a,
            ineq_rhs=b,
            lower=np.zeros(n),
            upper=upper,
            integer_mask=np.ones(n, dtype=bool),
        )
        res = solve_milp(inst)
        oracle = _brute_force_box(c, a, b, upper)
        if oracle is np.inf:
            assert res.status == "infeasible"
        else:
            assert res.objective == pytest.approx(oracle, abs=1e-6)


def test_relaxation_is_valid_lower_bound():
    rng = np.random.default_rng(11)
    c = rng.normal(size=4)
    a = rng.uniform(0, 1, size=(2, 4))
    b = np.array([2.0, 2.5])
    inst = MilpInstance(
        objective=c,
        ineq_matrix=a,
        ineq_rhs=b,
        lower=np.zeros(4),
        upper=np.full(4, 2.0),
        integer_mask=np.ones(4, dtype=bool),
    )
    res = solve_milp(inst)
    assert res.status == "optimal"
    assert res.relaxation_objective <= res.objective + 1e-9


def test_infeasible_reported():
    inst = MilpInstance(
        objective=[1.0, 1.0],
        ineq_matrix=[[1.0, 1.0]],
        ineq_rhs=[-2.0],
        lower=[0.0, 0.0],
        upper=[5.0, 5.0],
        integer_mask=[True, True],
    )
    assert solve_milp(inst).status == "infeasible"


def test_node_budget_error_carries_incumbent():
    rng = np.random.default_rng(4)
    n = 8
    c = -rng.uniform(1, 2, size=n)
    a = rng.uniform(0.3, 1.0, size=(1, n))
    inst = MilpInstance(
        objective=c,
        ineq_matrix=a,
        ineq_rhs=[2.0],
        lower=np.zeros(n),
        upper=np.ones(n),
        integer_mask=np.ones(n, dtype=bool),
    )
    with pytest.raises(NodeBudgetError) as info:
        solve_milp(inst, node_budget=2)
    assert info.value.budget == 2


def test_branch_tree_deterministic():
    rng = np.random.default_rng(8)
    c = rng.normal(size=5)
    a = rng.uniform(0, 1, size=(2, 5))
    inst = MilpInstance(
        objective=c,
        ineq_matrix=a,
        ineq_rhs=[1.7, 2.1],
        lower=np.zeros(5),
        upper=np.full(5, 2.0),
        integer_mask=np.ones(5, dtype=bool),
    )
    r1 = solve_milp(inst)
    r2 = solve_milp(inst)
    np.testing.assert_array_equal(r1.x, r2.x)
    assert r1.branch_log == r2.branch_log
    assert r1.nodes == r2.nodes
