import itertools

import numpy as np
import pytest

from gridres.solvers.instances import MilpInstance
from gridres.solvers.lp import solve_lp


def test_min_x_above_three():
    inst = MilpInstance(objective=[1.0], lower=[3.0], upper=[np.inf])
    res = solve_lp(inst)
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(3.0)


def test_upper_bound_active():
    inst = MilpInstance(objective=[-1.0], lower=[0.0], upper=[5.0])
    res = solve_lp(inst)
    assert res.x[0] == pytest.approx(5.0)


def test_equality_row():
    inst = MilpInstance(
        objective=[1.0, 0.0],
        eq_matrix=[[1.0, 1.0]],
        eq_rhs=[5.0],
        lower=[0.0, 0.0],
        upper=[np.inf, np.inf],
    )
    res = solve_lp(inst)
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(0.0, abs=1e-9)
    assert res.x[1] == pytest.approx(5.0)


def test_infeasible_rows():
    inst = MilpInstance(
        objective=[0.0, 0.0],
        ineq_matrix=[[1.0, 1.0]],
        ineq_rhs=[-1.0],
        lower=[0.0, 0.0],
        upper=[np.inf, np.inf],
    )
    assert solve_lp(inst).status == "infeasible"


def test_unbounded():
    inst = MilpInstance(objective=[-1.0], lower=[0.0], upper=[np.inf])
    assert solve_lp(inst).status == "unbounded"


def test_degenerate_redundant_constraints_terminate():
    # Same facet stacked repeatedly: classic degeneracy; must still finish.
    a = np.vstack([np.ones((6, 3)), np.eye(3)])
    b = np.concatenate([np.full(6, 3.0), np.ones(3)])
    inst = MilpInstance(
        objective=[-1.0, -1.0, -1.0],
        ineq_matrix=a,
        ineq_rhs=b,
        lower=np.zeros(3),
        upper=np.full(3, np.inf),
    )
    res = solve_lp(inst)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-3.0)


def _enumerate_vertices(c, a_ub, b_ub, lower, upper):
    """Brute-force optimum over all basic points of the inequality system."""
    n = c.size
    rows = [(*a_ub[i], b_ub[i]) for i in range(a_ub.shape[0])]
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        rows.append((*(-e), -lower[i]))
        rows.append((*e, upper[i]))
    rows = np.array(rows)
    best = np.inf
    for combo in itertools.combinations(range(rows.shape[0]), n):
        mat = rows[list(combo), :n]
        rhs = rows[list(combo), n]
        try:
            x = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            continue
        if (
            np.all(a_ub @ x <= b_ub + 1e-7)
            and np.all(x >= lower - 1e-7)
            and np.all(x <= upper + 1e-7)
        ):
            best = min(best, float(c @ x))
    return best


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(123)
    for trial in range(25):
        n, m = 4, 6
        c = rng.normal(size=n)
        a = rng.normal(size=(m, n))
        x0 = rng.uniform(0.2, 0.8, size=n)
        b = a @ x0 + rng.uniform(0.1, 1.0, size=m)
        lower = np.zeros(n)
        upper = np.full(n, 2.0)
        inst = MilpInstance(objective=c, ineq_matrix=a, ineq_rhs=b, lower=lower, upper=upper)
        res = solve_lp(inst)
        assert res.status == "optimal"
        oracle = _enumerate_vertices(c, a, b, lower, upper)
        assert res.objective == pytest.approx(oracle, abs=1e-7)


def test_reduced_cost_optimality_margin():
    # Solutions should be reproducible bit-for-bit across calls.
    rng = np.random.default_rng(5)
    c = rng.normal(size=5)
    a = rng.normal(size=(3, 5))
    b = a @ np.full(5, 0.5) + 0.5
    inst = MilpInstance(objective=c, ineq_matrix=a, ineq_rhs=b, lower=np.zeros(5), upper=np.ones(5))
    r1 = solve_lp(inst)
    r2 = solve_lp(inst)
    np.testing.assert_array_equal(r1.x, r2.x)
    assert r1.objective == r2.objective
