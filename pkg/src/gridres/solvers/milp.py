"""Best-first branch-and-bound over LP relaxations.

Branching tightens variable bounds only (the simplex handles bounds
natively), selects the most fractional masked variable (ties to the
lowest index), and explores nodes in (bound, creation order). The
returned objective is within 1e-6 absolute of the true optimum.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, NodeBudgetError
from .instances import MilpInstance
from .lp import solve_lp

INT_TOL = 1e-6
GAP_TOL = 1e-6
DEFAULT_NODE_BUDGET = 200_000


@dataclass
class MilpResult:
    status: str  # "optimal" | "infeasible"
    x: np.ndarray | None
    objective: float | None
    nodes: int
    relaxation_objective: float | None
    branch_log: list = field(default_factory=list)


def _fractional_index(x: np.ndarray, mask: np.ndarray) -> int | None:
    frac = np.abs(x - np.round(x))
    frac[~mask] = 0.0
    if frac.max() <= INT_TOL:
        return None
    # Most fractional: distance of the fractional part from 1/2.
    part = x - np.floor(x)
    score = np.abs(part - 0.5)
    score[~mask | (frac <= INT_TOL)] = np.inf
    return int(np.argmin(score))  # argmin ties -> lowest index


def _snap(x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = x.copy()
    out[mask] = np.round(out[mask])
    # Kill -0.0 so emitted solutions are byte-stable.
    out[out == 0.0] = 0.0
    return out


def solve_milp(instance: MilpInstance, node_budget: int = DEFAULT_NODE_BUDGET) -> MilpResult:
    """Exact solve of a bounded mixed-integer instance.

    Raises NodeBudgetError (carrying the incumbent, if any) when the
    budget is exhausted before optimality is proven.
    """
    if not instance.integer_mask.any():
        res = solve_lp(instance)
        if res.status != "optimal":
            return MilpResult(res.status, None, None, 1, None)
        return MilpResult("optimal", res.x, res.objective, 1, res.objective)

    mask = instance.integer_mask
    root = solve_lp(instance)
    nodes_solved = 1
    if root.status == "infeasible":
        return MilpResult("infeasible", None, None, nodes_solved, None)
    if root.status == "unbounded":
        raise ContractError("mixed-integer instance has an unbounded relaxation")

    incumbent = None
    incumbent_obj = np.inf
    branch_log: list[tuple[int, int, str]] = []
    counter = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray, np.ndarray]] = []
    heapq.heappush(heap, (root.objective, counter, instance.lower.copy(), instance.upper.copy(), root.x))

    while heap:
        bound, node_id, lo, up, x_lp = heapq.heappop(heap)
        if bound >= incumbent_obj - GAP_TOL:
            break  # best-first: every remaining node is at least as bad
        j = _fractional_index(x_lp, mask)
        if j is None:
            x_int = _snap(x_lp, mask)
            obj = float(instance.objective @ x_int) + instance.objective_offset
            if obj < incumbent_obj:
                incumbent, incumbent_obj = x_int, obj
            continue
        branch_log.append((node_id, j, f"<={np.floor(x_lp[j]):.0f}"))
        for direction in ("down", "up"):
            if nodes_solved >= node_budget:
                raise NodeBudgetError(
                    node_budget,
                    incumbent=incumbent,
                    incumbent_objective=None if incumbent is None else incumbent_obj,
                )
            clo, cup = lo.copy(), up.copy()
            if direction == "down":
                cup[j] = np.floor(x_lp[j])
            else:
                clo[j] = np.ceil(x_lp[j])
            res = solve_lp(instance, lower=clo, upper=cup)
            nodes_solved += 1
            if res.status != "optimal":
                continue
            if res.objective >= incumbent_obj - GAP_TOL:
                continue
            counter += 1
            heapq.heappush(heap, (res.objective, counter, clo, cup, res.x))

    if incumbent is None:
        return MilpResult("infeasible", None, None, nodes_solved, root.objective, branch_log)
    return MilpResult("optimal", incumbent, incumbent_obj, nodes_solved, root.objective, branch_log)
