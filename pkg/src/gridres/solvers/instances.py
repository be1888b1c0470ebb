"""Canonical optimization-problem representations shared by all solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DimensionError


def _as_matrix(m, n_cols) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.size == 0:
        return np.zeros((0, n_cols))
    if m.ndim != 2 or m.shape[1] != n_cols:
        raise DimensionError(f"matrix shape {m.shape} inconsistent with {n_cols} variables")
    return m


@dataclass
class MilpInstance:
    """min c.x + offset  s.t.  H x <= a,  E x = b,  l <= x <= u, mask integral."""

    objective: np.ndarray
    ineq_matrix: np.ndarray = None
    ineq_rhs: np.ndarray = None
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    integer_mask: np.ndarray = None
    objective_offset: float = 0.0
    feasible_start: np.ndarray | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=np.float64).ravel()
        n = self.objective.size
        self.ineq_matrix = _as_matrix(
            self.ineq_matrix if self.ineq_matrix is not None else np.zeros((0, n)), n
        )
        self.eq_matrix = _as_matrix(
            self.eq_matrix if self.eq_matrix is not None else np.zeros((0, n)), n
        )
        self.ineq_rhs = np.asarray(
            self.ineq_rhs if self.ineq_rhs is not None else np.zeros(0), dtype=np.float64
        ).ravel()
        self.eq_rhs = np.asarray(
            self.eq_rhs if self.eq_rhs is not None else np.zeros(0), dtype=np.float64
        ).ravel()
        if self.ineq_rhs.size != self.ineq_matrix.shape[0]:
            raise DimensionError("inequality rhs length != row count")
        if self.eq_rhs.size != self.eq_matrix.shape[0]:
            raise DimensionError("equality rhs length != row count")
        self.lower = (
            np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=np.float64).ravel()
        )
        self.upper = (
            np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=np.float64).ravel()
        )
        if self.lower.size != n or self.upper.size != n:
            raise DimensionError("bound vectors must match variable count")
        self.integer_mask = (
            np.zeros(n, dtype=bool)
            if self.integer_mask is None
            else np.asarray(self.integer_mask, dtype=bool).ravel()
        )
        if self.integer_mask.size != n:
            raise DimensionError("integrality mask length must match variable count")
        if self.feasible_start is not None:
            self.feasible_start = np.asarray(self.feasible_start, dtype=np.float64).ravel()
            if self.feasible_start.size != n:
                raise DimensionError("feasible_start length must match variable count")

    @property
    def n_vars(self) -> int:
        return self.objective.size


@dataclass
class QpInstance:
    """min xi.x + rho*||x||^2  s.t.  H x <= a,  E x = b,  l <= x <= u."""

    linear_cost: np.ndarray
    reg_weight: float
    ineq_matrix: np.ndarray = None
    ineq_rhs: np.ndarray = None
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None
    feasible_start: np.ndarray | None = None

    def __post_init__(self):
        if self.reg_weight <= 0:
            raise ContractError("reg_weight must be positive for strong convexity")
        base = MilpInstance(
            objective=self.linear_cost,
            ineq_matrix=self.ineq_matrix,
            ineq_rhs=self.ineq_rhs,
            eq_matrix=self.eq_matrix,
            eq_rhs=self.eq_rhs,
            lower=self.lower,
            upper=self.upper,
            feasible_start=self.feasible_start,
        )
        self.linear_cost = base.objective
        self.ineq_matrix = base.ineq_matrix
        self.ineq_rhs = base.ineq_rhs
        self.eq_matrix = base.eq_matrix
        self.eq_rhs = base.eq_rhs
        self.lower = base.lower
        self.upper = base.upper
        self.feasible_start = base.feasible_start

    @property
    def n_vars(self) -> int:
        return self.linear_cost.size

    def objective_value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        return float(self.linear_cost @ x + self.reg_weight * (x @ x))


def relax_to_qp(instance: MilpInstance, reg_weight: float) -> QpInstance:
    """Drop integrality, keep all linear structure, add the quadratic term."""
    return QpInstance(
        linear_cost=instance.objective.copy(),
        reg_weight=reg_weight,
        ineq_matrix=instance.ineq_matrix.copy(),
        ineq_rhs=instance.ineq_rhs.copy(),
        eq_matrix=instance.eq_matrix.copy(),
        eq_rhs=instance.eq_rhs.copy(),
        lower=instance.lower.copy(),
        upper=instance.upper.copy(),
        feasible_start=None if instance.feasible_start is None else instance.feasible_start.copy(),
    )
