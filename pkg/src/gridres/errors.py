"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4.
"""


class GridresError(Exception):
    """Base class for all package errors."""


class DimensionError(GridresError):
    """Operand shapes do not conform to the requested operation."""


class ContractError(GridresError):
    """A documented precondition was violated by the caller."""


class ConfigError(GridresError):
    """Invalid or unknown configuration content."""


class DataError(GridresError):
    """Input data violates the documented schema or invariants."""


class NumericError(GridresError):
    """A numeric computation left the representable/finite regime."""


class TrainingDivergedError(NumericError):
    """Training loss became non-finite."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class SolverError(GridresError):
    """Base class for optimization-solver failures."""


class IterationLimitError(SolverError):
    """An iterative solver hit its iteration cap before converging."""


class NodeBudgetError(SolverError):
    """Branch-and-bound exhausted its node budget.

    Carries the best incumbent found so far (may be None).
    """

    def __init__(self, budget, incumbent=None, incumbent_objective=None):
        self.budget = budget
        self.incumbent = incumbent
        self.incumbent_objective = incumbent_objective
        super().__init__(f"node budget of {budget} exhausted")


class InfeasibleError(SolverError):
    """The constraint system admits no feasible point."""


class DegenerateActiveSetError(SolverError):
    """The active-set KKT system is singular.

    Differentiating through the solution is ill-posed at this point;
    perturbing the cost vector or increasing the regularization weight
    usually resolves it.
    """
