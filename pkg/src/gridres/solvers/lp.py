"""Dense two-phase primal simplex with bounded variables.

Works on the computational form min c.x s.t. A x = b, l <= x <= u,
produced by adding one slack per inequality row. Nonbasic variables sit
at a finite bound (or at zero when free both ways); branching bounds
from the MILP layer therefore never add rows. Pricing is Dantzig
(largest reduced-cost violation, ties to the lowest index) and switches
permanently to Bland's rule after a run of degenerate pivots, which
guarantees termination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, IterationLimitError
from .instances import MilpInstance

REDCOST_TOL = 1e-9
PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8
DEGENERATE_STREAK_LIMIT = 100

AT_LOWER, AT_UPPER, BASIC, FREE_ZERO = 0, 1, 2, 3


@dataclass
class LpResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None
    iterations: int


class _Simplex:
    def __init__(self, a, b, c, lower, upper):
        self.m, n = a.shape
        # Artificial columns are appended once; phase 2 pins them to zero.
        self.n_struct = n
        self.n = n + self.m
        self.T = np.hstack([a, np.zeros((self.m, self.m))])
        self.b = b.copy()
        self.c = np.concatenate([c, np.zeros(self.m)])
        self.lower = np.concatenate([lower, np.zeros(self.m)])
        self.upper = np.concatenate([upper, np.full(self.m, np.inf)])
        self.status = np.empty(self.n, dtype=np.int64)
        self.basis = np.arange(n, n + self.m)
        self.iterations = 0
        self.bland = False
        self.degenerate_streak = 0

    def nonbasic_value(self, j) -> float:
        s = self.status[j]
        if s == AT_LOWER:
            return self.lower[j]
        if s == AT_UPPER:
            return self.upper[j]
        return 0.0

    def setup_phase1(self):
        for j in range(self.n_struct):
            if np.isfinite(self.lower[j]):
                self.status[j] = AT_LOWER
            elif np.isfinite(self.upper[j]):
                self.status[j] = AT_UPPER
            else:
                self.status[j] = FREE_ZERO
        xn = np.array([self.nonbasic_value(j) for j in range(self.n_struct)])
        resid = self.b - self.T[:, : self.n_struct] @ xn
        # Give each artificial the sign of its residual so it starts feasible.
        for i in range(self.m):
            sign = 1.0 if resid[i] >= 0 else -1.0
            self.T[i, self.n_struct + i] = sign
            if sign < 0:
                self.T[i, :] *= -1.0
        self.xb = np.abs(resid)
        self.status[self.n_struct :] = AT_LOWER
        self.status[self.basis] = BASIC

    def current_x(self) -> np.ndarray:
        x = np.array([self.nonbasic_value(j) for j in range(self.n)])
        x[self.basis] = self.xb
        return x

    def reduced_costs(self, c) -> np.ndarray:
        return c - c[self.basis] @ self.T

    def choose_entering(self, d) -> int | None:
        eligible_lo = (self.status == AT_LOWER) & (d < -REDCOST_TOL)
        eligible_up = (self.status == AT_UPPER) & (d > REDCOST_TOL)
        eligible_fr = (self.status == FREE_ZERO) & (np.abs(d) > REDCOST_TOL)
        mask = eligible_lo | eligible_up | eligible_fr
        if not mask.any():
            return None
        idx = np.flatnonzero(mask)
        if self.bland:
            return int(idx[0])
        scores = np.abs(d[idx])
        return int(idx[np.argmax(scores)])  # argmax ties -> first (lowest index)

    def step(self, c) -> str:
        d = self.reduced_costs(c)
        j = self.choose_entering(d)
        if j is None:
            return "optimal"
        sigma = 1.0
        if self.status[j] == AT_UPPER or (self.status[j] == FREE_ZERO and d[j] > 0):
            sigma = -1.0
        w = self.T[:, j]
        delta = -sigma * w  # change of basic values per unit step

        t_best = np.inf
        leave_row = -1
        for i in range(self.m):
            bi = self.basis[i]
            if delta[i] < -PIVOT_TOL:
                lim = self.lower[bi]
                if np.isfinite(lim):
                    t = (self.xb[i] - lim) / (-delta[i])
                else:
                    continue
            elif delta[i] > PIVOT_TOL:
                lim = self.upper[bi]
                if np.isfinite(lim):
                    t = (lim - self.xb[i]) / delta[i]
                else:
                    continue
            else:
                continue
            t = max(t, 0.0)
            if t < t_best - PIVOT_TOL or (
                t < t_best + PIVOT_TOL and (leave_row < 0 or bi < self.basis[leave_row])
            ):
                t_best = t
                leave_row = i

        t_flip = np.inf
        if np.isfinite(self.lower[j]) and np.isfinite(self.upper[j]):
            t_flip = self.upper[j] - self.lower[j]

        if min(t_best, t_flip) == np.inf:
            return "unbounded"

        self.iterations += 1
        t_star = min(t_best, t_flip)
        self.degenerate_streak = 0 if t_star > PIVOT_TOL else self.degenerate_streak + 1
        if self.degenerate_streak > DEGENERATE_STREAK_LIMIT:
            self.bland = True

        if t_flip <= t_best:
            # Bound flip: no basis change.
            self.xb += delta * t_flip
            self.status[j] = AT_UPPER if self.status[j] == AT_LOWER else AT_LOWER
            return "continue"

        self.xb += delta * t_star
        entering_value = self.nonbasic_value(j) + sigma * t_star
        leaving = self.basis[leave_row]
        # Snap the leaving variable exactly onto the bound it hit.
        self.status[leaving] = AT_LOWER if delta[leave_row] < 0 else AT_UPPER
        self.status[j] = BASIC
        self.basis[leave_row] = j
        self.xb[leave_row] = entering_value

        piv = self.T[leave_row, j]
        self.T[leave_row, :] /= piv
        col = self.T[:, j].copy()
        col[leave_row] = 0.0
        self.T -= np.outer(col, self.T[leave_row, :])
        return "continue"

    def run(self, c, max_iter) -> str:
        hard_cap = 5 * max_iter
        while True:
            outcome = self.step(c)
            if outcome != "continue":
                return outcome
            if self.iterations > max_iter:
                # Last-resort switch; Bland guarantees finite termination.
                self.bland = True
            if self.iterations > hard_cap:
                raise IterationLimitError(f"simplex exceeded {hard_cap} pivots")


def solve_lp(
    instance: MilpInstance,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    max_iter: int | None = None,
) -> LpResult:
    """Solve the LP relaxation of ``instance`` (integrality ignored).

    ``lower``/``upper`` override the instance bounds (used by
    branch-and-bound nodes).
    """
    n = instance.n_vars
    lower = instance.lower if lower is None else np.asarray(lower, dtype=np.float64)
    upper = instance.upper if upper is None else np.asarray(upper, dtype=np.float64)
    if np.any(lower > upper + 1e-12):
        return LpResult("infeasible", None, None, 0)
    if not np.all(np.isfinite(instance.objective)):
        raise ContractError("objective coefficients must be finite")

    m_ub = instance.ineq_matrix.shape[0]
    a = np.vstack(
        [
            np.hstack([instance.eq_matrix, np.zeros((instance.eq_matrix.shape[0], m_ub))]),
            np.hstack([instance.ineq_matrix, np.eye(m_ub)]),
        ]
    )
    b = np.concatenate([instance.eq_rhs, instance.ineq_rhs])
    c = np.concatenate([instance.objective, np.zeros(m_ub)])
    lo = np.concatenate([lower, np.zeros(m_ub)])
    up = np.concatenate([upper, np.full(m_ub, np.inf)])

    sx = _Simplex(a, b, c * 0.0, lo, up)
    sx.setup_phase1()
    max_iter = max_iter or 200 * (sx.n + sx.m + 10)

    phase1_cost = np.zeros(sx.n)
    phase1_cost[sx.n_struct :] = 1.0
    outcome = sx.run(phase1_cost, max_iter)
    if outcome == "unbounded":  # cannot happen: phase-1 objective >= 0
        return LpResult("infeasible", None, None, sx.iterations)
    if float(phase1_cost @ sx.current_x()) > FEAS_TOL:
        return LpResult("infeasible", None, None, sx.iterations)

    # Pin artificials to zero so they never re-enter; drive basic ones out
    # of the basis where a nonzero pivot exists (redundant rows keep them,
    # harmlessly stuck at zero).
    sx.upper[sx.n_struct :] = 0.0
    for i in range(sx.m):
        if sx.basis[i] >= sx.n_struct:
            row = sx.T[i, : sx.n_struct]
            candidates = np.flatnonzero(np.abs(row) > 1e-7)
            for j in candidates:
                if sx.status[j] != BASIC:
                    art = sx.basis[i]
                    entering_value = sx.nonbasic_value(j)
                    sx.status[art] = AT_LOWER
                    sx.status[j] = BASIC
                    sx.basis[i] = j
                    piv = sx.T[i, j]
                    sx.T[i, :] /= piv
                    col = sx.T[:, j].copy()
                    col[i] = 0.0
                    sx.T -= np.outer(col, sx.T[i, :])
                    sx.xb[i] = entering_value
                    break

    full_cost = np.zeros(sx.n)
    full_cost[: n + m_ub] = c
    outcome = sx.run(full_cost, max_iter)
    if outcome == "unbounded":
        return LpResult("unbounded", None, None, sx.iterations)
    x_full = sx.current_x()
    x = x_full[:n]
    objective = float(instance.objective @ x) + instance.objective_offset
    return LpResult("optimal", x, objective, sx.iterations)
