"""Plain-text dump/load of solver instances for debugging and cross-checks.

Format (one value per token, floats via repr, inf/-inf literal):

    gridres-instance v1 <milp|qp>
    vars <n>
    objective_offset <float>        (milp only)
    reg_weight <float>              (qp only)
    objective <n floats>
    lower <n floats>
    upper <n floats>
    integer <n 0/1 flags>           (milp only)
    eq <m>
    <n row coefficients> <rhs>      (m lines)
    ineq <m>
    <n row coefficients> <rhs>      (m lines)
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from .instances import MilpInstance, QpInstance

_MAGIC = "gridres-instance"
_VERSION = "v1"


def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def _dump_common(lines, kind, n, objective, lower, upper):
    lines.append(f"{_MAGIC} {_VERSION} {kind}")
    lines.append(f"vars {n}")
    lines.append("objective " + _fmt_row(objective))
    lines.append("lower " + _fmt_row(lower))
    lines.append("upper " + _fmt_row(upper))


def _dump_system(lines, label, matrix, rhs):
    lines.append(f"{label} {matrix.shape[0]}")
    for i in range(matrix.shape[0]):
        lines.append(_fmt_row(matrix[i]) + " " + repr(float(rhs[i])))


def dump_milp(inst: MilpInstance) -> str:
    lines: list[str] = []
    _dump_common(lines, "milp", inst.n_vars, inst.objective, inst.lower, inst.upper)
    lines.insert(2, f"objective_offset {inst.objective_offset!r}")
    lines.append("integer " + " ".join("1" if f else "0" for f in inst.integer_mask))
    _dump_system(lines, "eq", inst.eq_matrix, inst.eq_rhs)
    _dump_system(lines, "ineq", inst.ineq_matrix, inst.ineq_rhs)
    return "\n".join(lines) + "\n"


def dump_qp(inst: QpInstance) -> str:
    lines: list[str] = []
    _dump_common(lines, "qp", inst.n_vars, inst.linear_cost, inst.lower, inst.upper)
    lines.insert(2, f"reg_weight {inst.reg_weight!r}")
    _dump_system(lines, "eq", inst.eq_matrix, inst.eq_rhs)
    _dump_system(lines, "ineq", inst.ineq_matrix, inst.ineq_rhs)
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text: str):
        self.lines = [ln for ln in text.splitlines() if ln.strip()]
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise DataError("truncated instance text")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def keyed(self, key: str) -> list[str]:
        parts = self.next().split()
        if parts[0] != key:
            raise DataError(f"expected '{key}' line, found '{parts[0]}'")
        return parts[1:]


def _read_system(reader: _Reader, label: str, n: int):
    (count,) = reader.keyed(label)
    rows, rhs = [], []
    for _ in range(int(count)):
        vals = [float(v) for v in reader.next().split()]
        if len(vals) != n + 1:
            raise DataError(f"{label} row has {len(vals)} values, expected {n + 1}")
        rows.append(vals[:n])
        rhs.append(vals[n])
    matrix = np.array(rows) if rows else np.zeros((0, n))
    return matrix, np.array(rhs)


def _load_header(reader: _Reader, expected_kind: str) -> int:
    head = reader.next().split()
    if head[:2] != [_MAGIC, _VERSION] or len(head) != 3:
        raise DataError("unrecognized instance header")
    if head[2] != expected_kind:
        raise DataError(f"instance is '{head[2]}', expected '{expected_kind}'")
    (n,) = reader.keyed("vars")
    return int(n)


def load_milp(text: str) -> MilpInstance:
    reader = _Reader(text)
    n = _load_header(reader, "milp")
    (offset,) = reader.keyed("objective_offset")
    objective = [float(v) for v in reader.keyed("objective")]
    lower = [float(v) for v in reader.keyed("lower")]
    upper = [float(v) for v in reader.keyed("upper")]
    mask = [flag == "1" for flag in reader.keyed("integer")]
    eq_m, eq_r = _read_system(reader, "eq", n)
    in_m, in_r = _read_system(reader, "ineq", n)
    return MilpInstance(
        objective=objective,
        ineq_matrix=in_m,
        ineq_rhs=in_r,
        eq_matrix=eq_m,
        eq_rhs=eq_r,
        lower=lower,
        upper=upper,
        integer_mask=mask,
        objective_offset=float(offset),
    )


def load_qp(text: str) -> QpInstance:
    reader = _Reader(text)
    n = _load_header(reader, "qp")
    (rho,) = reader.keyed("reg_weight")
    objective = [float(v) for v in reader.keyed("objective")]
    lower = [float(v) for v in reader.keyed("lower")]
    upper = [float(v) for v in reader.keyed("upper")]
    eq_m, eq_r = _read_system(reader, "eq", n)
    in_m, in_r = _read_system(reader, "ineq", n)
    return QpInstance(
        linear_cost=objective,
        reg_weight=float(rho),
        ineq_matrix=in_m,
        ineq_rhs=in_r,
        eq_matrix=eq_m,
        eq_rhs=eq_r,
        lower=lower,
        upper=upper,
    )
