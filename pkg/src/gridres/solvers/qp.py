"""Strongly convex QP: primal active-set solve and KKT sensitivities.

The objective is xi.x + rho*||x||^2 with rho > 0, so every equality-
constrained subproblem has the closed form d = -(g + A^T mu)/(2 rho)
with (A A^T) mu = -A g; that Schur solve stays well defined even when
the working rows are linearly dependent (minimum-norm multipliers).
Bounds are handled by pinning coordinates rather than carrying rows.

The backward pass differentiates the KKT system of the solution's
strongly active set, yielding loss gradients with respect to both the
linear cost vector and the inequality right-hand sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    ContractError,
    DegenerateActiveSetError,
    InfeasibleError,
    IterationLimitError,
)
from .instances import MilpInstance, QpInstance
from .lp import solve_lp

FEAS_TOL = 1e-9
WEAK_DUAL_TOL = 1e-8  # multipliers below this count as inactive in backward


@dataclass
class QpSolution:
    x: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    lower_duals: np.ndarray
    upper_duals: np.ndarray
    active_ineq: list[int]
    active_lower: list[int]
    active_upper: list[int]
    iterations: int
    residuals: dict = field(default_factory=dict)


def _independent_rows(mat: np.ndarray, tol: float = 1e-9) -> list[int]:
    """Greedy maximal independent row subset, stable in row order."""
    basis: list[np.ndarray] = []
    keep: list[int] = []
    for i in range(mat.shape[0]):
        v = mat[i].astype(np.float64, copy=True)
        norm0 = np.linalg.norm(v)
        if norm0 <= tol:
            continue
        for b in basis:
            v -= (v @ b) * b
        nrm = np.linalg.norm(v)
        if nrm > tol * max(1.0, norm0):
            basis.append(v / nrm)
            keep.append(i)
    return keep


def _find_feasible(inst: QpInstance) -> np.ndarray:
    if inst.feasible_start is not None:
        x = inst.feasible_start
        ok = (
            np.all(x >= inst.lower - FEAS_TOL)
            and np.all(x <= inst.upper + FEAS_TOL)
            and (inst.ineq_matrix.size == 0 or np.all(inst.ineq_matrix @ x <= inst.ineq_rhs + FEAS_TOL))
            and (inst.eq_matrix.size == 0 or np.max(np.abs(inst.eq_matrix @ x - inst.eq_rhs)) <= 1e-7)
        )
        if ok:
            return np.clip(x.copy(), inst.lower, inst.upper)
    lp = MilpInstance(
        objective=np.zeros(inst.n_vars),
        ineq_matrix=inst.ineq_matrix,
        ineq_rhs=inst.ineq_rhs,
        eq_matrix=inst.eq_matrix,
        eq_rhs=inst.eq_rhs,
        lower=inst.lower,
        upper=inst.upper,
    )
    res = solve_lp(lp)
    if res.status != "optimal":
        raise InfeasibleError("QP constraint system is infeasible")
    return res.x


def _solve_eqp(g_free: np.ndarray, a_free: np.ndarray, rho: float):
    """Direction and multipliers of the equality-constrained subproblem.

    The working set is kept linearly independent on the free coordinates
    (blocking rows are never dependent on it), so the Gram solve is
    nonsingular up to roundoff; lstsq is a numerical safety net only.
    """
    if a_free.shape[0] == 0:
        return -g_free / (2.0 * rho), np.zeros(0)
    gram = a_free @ a_free.T
    rhs = -(a_free @ g_free)
    try:
        mu = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        mu, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    d = -(g_free + a_free.T @ mu) / (2.0 * rho)
    return d, mu


def solve_qp(inst: QpInstance, max_iter: int | None = None, debug_trace: list | None = None) -> QpSolution:
    """Active-set minimization of the strongly convex instance."""
    n = inst.n_vars
    rho = inst.reg_weight
    xi = inst.linear_cost
    h, a_rhs = inst.ineq_matrix, inst.ineq_rhs
    e, b_rhs = inst.eq_matrix, inst.eq_rhs
    mi, me = h.shape[0], e.shape[0]
    if max_iter is None:
        max_iter = max(500, 25 * (n + mi + me))

    x = _find_feasible(inst)
    eq_keep = _independent_rows(e) if me else []
    e_work = e[eq_keep] if me else e
    row_norms = np.linalg.norm(h, axis=1) if mi else np.zeros(0)

    working: list[int] = []  # active general inequality rows, insertion order
    pin_state = np.zeros(n, dtype=np.int8)  # 0 free, 1 at lower, 2 at upper
    dual_scale = 1.0 + float(np.max(np.abs(xi))) if n else 1.0

    mu = np.zeros(0)
    at_subproblem_min = False  # set after a full unblocked step
    banned: set = set()  # constraints whose drop opened no movement here
    last_dropped = None
    for iteration in range(max_iter):
        g = xi + 2.0 * rho * x
        free = np.flatnonzero(pin_state == 0)
        rows = [e_work] if e_work.shape[0] else []
        if working:
            rows.append(h[working])
        a_full = np.vstack(rows) if rows else np.zeros((0, n))
        d_free, mu = _solve_eqp(g[free], a_full[:, free] if a_full.size else a_full, rho)
        d = np.zeros(n)
        d[free] = d_free

        # The direction's numerical noise floor scales with the unconstrained
        # step g/(2 rho), not with x, so measure stationarity against it.
        d_zero_tol = 1e-7 * max(1.0, float(np.max(np.abs(g), initial=0.0)) / (2.0 * rho))
        stationary = np.max(np.abs(d), initial=0.0) <= d_zero_tol
        if stationary or at_subproblem_min:
            at_subproblem_min = False
            # Stationary on the working set: check inequality multipliers.
            # Banned constraints are redundant at this point (dropping them
            # opened no movement); their multipliers are artifacts of the
            # minimum-norm solve and are excluded from the test.
            lam_work = mu[e_work.shape[0] :]
            resid = g + (a_full.T @ mu if a_full.size else 0.0)
            worst_val = -1e-9 * dual_scale
            worst = None  # (kind, payload, identity)
            for pos in range(len(working)):
                if ("ineq", working[pos]) in banned:
                    continue
                if lam_work[pos] < worst_val:
                    worst_val = lam_work[pos]
                    worst = ("ineq", pos, ("ineq", working[pos]))
            for i in np.flatnonzero(pin_state == 1):
                if ("lower", i) in banned:
                    continue
                if resid[i] < worst_val:  # lower-pin dual = +resid
                    worst_val = resid[i]
                    worst = ("lower", i, ("lower", int(i)))
            for i in np.flatnonzero(pin_state == 2):
                if ("upper", i) in banned:
                    continue
                if -resid[i] < worst_val:  # upper-pin dual = -resid
                    worst_val = -resid[i]
                    worst = ("upper", i, ("upper", int(i)))
            if worst is None:
                return _package_solution(inst, x, mu, working, pin_state, e_work, eq_keep, iteration)
            if debug_trace is not None:
                debug_trace.append((iteration, "drop", worst, float(worst_val)))
            kind, payload, identity = worst
            last_dropped = identity
            if kind == "ineq":
                working.pop(payload)
            else:
                pin_state[payload] = 0
            continue

        # Step toward the subproblem minimizer; stop at the first blocker.
        # Blocking thresholds are relative to the direction and row scale:
        # a row dependent on the working set has row.d = 0 exactly, so a
        # genuinely blocking row is always independent of it and the
        # working set stays full-rank on the free coordinates.
        d_scale = float(np.linalg.norm(d))
        alpha = 1.0
        blocker = None
        if mi:
            hd = h @ d
            slack = a_rhs - h @ x
            for r in range(mi):
                if r in working or hd[r] <= 1e-11 * max(1.0, row_norms[r]) * max(1.0, d_scale):
                    continue
                cand = max(slack[r], 0.0) / hd[r]
                if cand < alpha - 1e-14:
                    alpha, blocker = cand, ("ineq", r)
        bound_tol = 1e-11 * max(1.0, d_scale)
        for i in free:
            if d[i] > bound_tol and np.isfinite(inst.upper[i]):
                cand = (inst.upper[i] - x[i]) / d[i]
                if cand < alpha - 1e-14:
                    alpha, blocker = cand, ("upper", i)
            elif d[i] < -bound_tol and np.isfinite(inst.lower[i]):
                cand = (inst.lower[i] - x[i]) / d[i]
                if cand < alpha - 1e-14:
                    alpha, blocker = cand, ("lower", i)

        if debug_trace is not None:
            debug_trace.append((iteration, "step", blocker, float(alpha), float(d_scale)))
        x = x + max(alpha, 0.0) * d
        if alpha > 1e-12:
            banned.clear()
            last_dropped = None
        if blocker is not None:
            kind, idx = blocker
            identity = (kind, int(idx))
            if alpha <= 1e-12 and identity == last_dropped:
                banned.add(identity)
            if kind == "ineq":
                working.append(idx)
            elif kind == "lower":
                pin_state[idx] = 1
                x[idx] = inst.lower[idx]
            else:
                pin_state[idx] = 2
                x[idx] = inst.upper[idx]
        else:
            # Landed exactly on the subproblem minimizer: test multipliers
            # next even if Gram noise keeps the next direction above zero.
            at_subproblem_min = True

    raise IterationLimitError(f"active set did not converge within {max_iter} iterations")


def _polish(inst, x, pin_state, a_full, rhs_active):
    """Minimum-norm restoration of active-constraint feasibility.

    Stepping accumulates ~1e-9 drift on active rows; complementarity
    tolerances need them at roundoff level.
    """
    x = np.clip(x, inst.lower, inst.upper)
    if a_full.shape[0]:
        free = np.flatnonzero(pin_state == 0)
        a_free = a_full[:, free]
        gap = rhs_active - a_full @ x
        gram = a_free @ a_free.T
        try:
            corr = a_free.T @ np.linalg.solve(gram, gap)
        except np.linalg.LinAlgError:
            corr = a_free.T @ np.linalg.lstsq(gram, gap, rcond=None)[0]
        x[free] += corr
        x = np.clip(x, inst.lower, inst.upper)
    return x


def _package_solution(inst, x, mu, working, pin_state, e_work, eq_keep, iterations) -> QpSolution:
    n = inst.n_vars
    me_k = e_work.shape[0]
    a_rows = [e_work] if me_k else []
    rhs_rows = [inst.eq_rhs[eq_keep]] if me_k else []
    if working:
        a_rows.append(inst.ineq_matrix[working])
        rhs_rows.append(inst.ineq_rhs[working])
    a_full = np.vstack(a_rows) if a_rows else np.zeros((0, n))
    rhs_active = np.concatenate(rhs_rows) if rhs_rows else np.zeros(0)
    x = _polish(inst, x, pin_state, a_full, rhs_active)
    g = inst.linear_cost + 2.0 * inst.reg_weight * x
    resid = g + (a_full.T @ mu if a_full.size else 0.0)

    eq_duals = np.zeros(inst.eq_matrix.shape[0])
    for pos, row in enumerate(eq_keep):
        eq_duals[row] = mu[pos]
    ineq_duals = np.zeros(inst.ineq_matrix.shape[0])
    for pos, row in enumerate(working):
        ineq_duals[row] = max(mu[me_k + pos], 0.0)
    lower_duals = np.zeros(n)
    upper_duals = np.zeros(n)
    lo_idx = np.flatnonzero(pin_state == 1)
    up_idx = np.flatnonzero(pin_state == 2)
    lower_duals[lo_idx] = np.maximum(resid[lo_idx], 0.0)
    upper_duals[up_idx] = np.maximum(-resid[up_idx], 0.0)

    sol = QpSolution(
        x=x.copy(),
        eq_duals=eq_duals,
        ineq_duals=ineq_duals,
        lower_duals=lower_duals,
        upper_duals=upper_duals,
        active_ineq=sorted(working),
        active_lower=[int(i) for i in lo_idx],
        active_upper=[int(i) for i in up_idx],
        iterations=iterations,
    )
    sol.residuals = kkt_residuals(inst, sol)
    return sol


def kkt_residuals(inst: QpInstance, sol: QpSolution) -> dict:
    """Stationarity / feasibility / complementarity residual norms."""
    x = sol.x
    stat = inst.linear_cost + 2.0 * inst.reg_weight * x
    if inst.eq_matrix.size:
        stat = stat + inst.eq_matrix.T @ sol.eq_duals
    if inst.ineq_matrix.size:
        stat = stat + inst.ineq_matrix.T @ sol.ineq_duals
    stat = stat - sol.lower_duals + sol.upper_duals

    primal = 0.0
    if inst.eq_matrix.size:
        primal = max(primal, float(np.max(np.abs(inst.eq_matrix @ x - inst.eq_rhs))))
    if inst.ineq_matrix.size:
        primal = max(primal, float(np.max(inst.ineq_matrix @ x - inst.ineq_rhs, initial=0.0)))
    primal = max(primal, float(np.max(inst.lower - x, initial=0.0)))
    primal = max(primal, float(np.max(x - inst.upper, initial=0.0)))

    comp = 0.0
    if inst.ineq_matrix.size:
        comp = float(np.max(np.abs(sol.ineq_duals * (inst.ineq_rhs - inst.ineq_matrix @ x)), initial=0.0))
    lo_gap = np.where(np.isfinite(inst.lower), x - inst.lower, 0.0)
    up_gap = np.where(np.isfinite(inst.upper), inst.upper - x, 0.0)
    comp = max(comp, float(np.max(np.abs(sol.lower_duals * lo_gap), initial=0.0)))
    comp = max(comp, float(np.max(np.abs(sol.upper_duals * up_gap), initial=0.0)))

    return {
        "stationarity": float(np.max(np.abs(stat), initial=0.0)),
        "primal": primal,
        "complementarity": comp,
    }


@dataclass
class QpBackward:
    """Loss gradients w.r.t. the QP's parameters."""

    d_linear_cost: np.ndarray
    d_ineq_rhs: np.ndarray
    d_eq_rhs: np.ndarray


def qp_backward(sol: QpSolution, inst: QpInstance, upstream: np.ndarray) -> QpBackward:
    """Chain an upstream gradient w.r.t. x* through the KKT system.

    Only strongly active constraints (dual > 1e-8) enter the sensitivity
    system; weakly active ones are treated as inactive.
    """
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    n = inst.n_vars
    if upstream.size != n:
        raise ContractError("upstream gradient length must match variable count")

    rows = []
    tags = []  # ("eq", i) | ("ineq", r) | ("pin", i)
    for i in range(inst.eq_matrix.shape[0]):
        rows.append(inst.eq_matrix[i])
        tags.append(("eq", i))
    for r in np.flatnonzero(sol.ineq_duals > WEAK_DUAL_TOL):
        rows.append(inst.ineq_matrix[r])
        tags.append(("ineq", int(r)))
    for i in np.flatnonzero(sol.lower_duals > WEAK_DUAL_TOL):
        row = np.zeros(n)
        row[i] = -1.0
        rows.append(row)
        tags.append(("pin", int(i)))
    for i in np.flatnonzero(sol.upper_duals > WEAK_DUAL_TOL):
        row = np.zeros(n)
        row[i] = 1.0
        rows.append(row)
        tags.append(("pin", int(i)))

    a_all = np.vstack(rows) if rows else np.zeros((0, n))
    keep = _independent_rows(a_all) if rows else []
    a = a_all[keep]

    two_rho = 2.0 * inst.reg_weight
    if a.shape[0] == 0:
        u = upstream / two_rho
        return QpBackward(-u, np.zeros(inst.ineq_matrix.shape[0]), np.zeros(inst.eq_matrix.shape[0]))

    gram = a @ a.T
    try:
        v = np.linalg.solve(gram, a @ upstream)
    except np.linalg.LinAlgError as exc:
        raise DegenerateActiveSetError(
            "singular KKT sensitivity system; perturb the cost or increase reg_weight"
        ) from exc
    u = (upstream - a.T @ v) / two_rho

    d_ineq = np.zeros(inst.ineq_matrix.shape[0])
    d_eq = np.zeros(inst.eq_matrix.shape[0])
    for pos, row_idx in enumerate(keep):
        kind, idx = tags[row_idx]
        if kind == "ineq":
            d_ineq[idx] = v[pos]
        elif kind == "eq":
            d_eq[idx] = v[pos]
    return QpBackward(-u, d_ineq, d_eq)
