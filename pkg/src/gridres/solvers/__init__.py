"""Self-contained LP / MILP / QP solvers and the QP sensitivity pass."""

from .instances import MilpInstance, QpInstance, relax_to_qp
from .lp import LpResult, solve_lp
from .milp import MilpResult, solve_milp
from .qp import QpBackward, QpSolution, kkt_residuals, qp_backward, solve_qp
from .textio import dump_milp, dump_qp, load_milp, load_qp

__all__ = [
    "MilpInstance",
    "QpInstance",
    "relax_to_qp",
    "LpResult",
    "solve_lp",
    "MilpResult",
    "solve_milp",
    "QpBackward",
    "QpSolution",
    "kkt_residuals",
    "qp_backward",
    "solve_qp",
    "dump_milp",
    "dump_qp",
    "load_milp",
    "load_qp",
]
