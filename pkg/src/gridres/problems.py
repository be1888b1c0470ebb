"""The two grid-resilience decision problems and their evaluators.

Mobile generator deployment: a time-expanded transport problem moving
generators between warehouses and service units, paying transport per
shipment, an operation cost per deployed generator-period, and an
interruption cost for every customer-period of outage not covered by
on-site generator capacity. The max{forecast - coverage, 0} outage term
is linearized with per-(period, unit) shortfall variables.

Power line undergrounding: a budgeted binary selection of units whose
outages are fully averted, minimizing the population-normalized outage
duration index over the horizon.

Both problems emit `MilpInstance`s; evaluators always score decisions
against a caller-supplied outage series (the realized one for costs and
regret, a forecast one inside the decision layer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError
from .solvers import MilpInstance, solve_milp
from .solvers.milp import DEFAULT_NODE_BUDGET
from .solvers.qp import QpBackward


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    cost: float
    travel: int


@dataclass
class DeploymentNetwork:
    """Topology, capacities, and cost constants of the deployment problem.

    Nodes 0..n_units-1 are service units; the following n_warehouses ids
    are warehouses. Edges may only connect a unit with a warehouse.
    """

    n_units: int
    n_warehouses: int
    edges: list[Edge]
    edge_capacity: float
    warehouse_stock: np.ndarray
    generator_capacity: float
    interruption_cost: float
    operation_cost: float
    horizon: int

    def __post_init__(self):
        self.warehouse_stock = np.asarray(self.warehouse_stock, dtype=np.float64)
        if self.warehouse_stock.shape != (self.n_warehouses,):
            raise DataError("warehouse_stock length must equal warehouse count")
        if np.any(self.warehouse_stock < 0):
            raise DataError("warehouse stocks must be nonnegative")
        if self.edge_capacity < 1:
            raise DataError("edge capacity must be at least 1")
        if self.generator_capacity <= 0 or self.interruption_cost < 0 or self.operation_cost < 0:
            raise DataError("costs must be nonnegative and generator capacity positive")
        if self.horizon < 1:
            raise DataError("horizon must span at least one period")
        for e in self.edges:
            if e.travel < 0 or e.cost < 0:
                raise DataError(f"edge {e} has negative cost or travel time")
            source_is_unit = e.source < self.n_units
            target_is_unit = e.target < self.n_units
            if source_is_unit == target_is_unit:
                raise DataError(f"edge {e} must connect a unit with a warehouse")

    @classmethod
    def uniform(
        cls,
        n_units: int,
        n_warehouses: int,
        transport_cost: float,
        travel_time: int,
        edge_capacity: float,
        warehouse_stock: float,
        generator_capacity: float,
        interruption_cost: float,
        operation_cost: float,
        horizon: int,
    ) -> "DeploymentNetwork":
        """Fully connected unit<->warehouse topology with shared constants."""
        edges = []
        for w in range(n_warehouses):
            wid = n_units + w
            for k in range(n_units):
                edges.append(Edge(wid, k, transport_cost, travel_time))
                edges.append(Edge(k, wid, transport_cost, travel_time))
        return cls(
            n_units=n_units,
            n_warehouses=n_warehouses,
            edges=edges,
            edge_capacity=edge_capacity,
            warehouse_stock=np.full(n_warehouses, float(warehouse_stock)),
            generator_capacity=generator_capacity,
            interruption_cost=interruption_cost,
            operation_cost=operation_cost,
            horizon=horizon,
        )

    @property
    def n_nodes(self) -> int:
        return self.n_units + self.n_warehouses

    @property
    def total_stock(self) -> float:
        return float(self.warehouse_stock.sum())

    def initial_stock(self) -> np.ndarray:
        q0 = np.zeros(self.n_nodes)
        q0[self.n_units :] = self.warehouse_stock
        return q0


@dataclass
class DeploymentDecision:
    kind = "deployment"
    shipments: np.ndarray  # (horizon, n_edges)

    def __post_init__(self):
        self.shipments = np.asarray(self.shipments, dtype=np.float64)


@dataclass
class UndergroundingDecision:
    kind = "undergrounding"
    selected: np.ndarray  # (n_units,) in {0, 1}

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=np.float64)


class DeploymentLayout:
    """Variable indexing of a deployment instance: shipments, stocks, shortfalls."""

    def __init__(self, net: DeploymentNetwork):
        self.net = net
        self.n_edges = len(net.edges)
        self.t_count = net.horizon
        self.q_offset = self.t_count * self.n_edges
        self.s_offset = self.q_offset + self.t_count * net.n_nodes
        self.n_vars = self.s_offset + self.t_count * net.n_units

    def x_index(self, t: int, e: int) -> int:
        return (t - 1) * self.n_edges + e

    def q_index(self, t: int, v: int) -> int:
        return self.q_offset + (t - 1) * self.net.n_nodes + v

    def s_index(self, t: int, k: int) -> int:
        return self.s_offset + (t - 1) * self.net.n_units + k

    def shortfall_row(self, t: int, k: int) -> int:
        return (t - 1) * self.net.n_units + k

    def shipments_of(self, vec: np.ndarray) -> np.ndarray:
        return vec[: self.q_offset].reshape(self.t_count, self.n_edges)

    def unit_stocks_of(self, vec: np.ndarray) -> np.ndarray:
        q = vec[self.q_offset : self.s_offset].reshape(self.t_count, self.net.n_nodes)
        return q[:, : self.net.n_units]


def build_deployment_instance(net: DeploymentNetwork, forecast: np.ndarray) -> MilpInstance:
    """Time-expanded MILP for a (horizon, units) outage forecast."""
    forecast = np.asarray(forecast, dtype=np.float64)
    if forecast.ndim != 2 or forecast.shape[1] != net.n_units:
        raise ContractError(f"forecast shape {forecast.shape} != (T, {net.n_units})")
    if forecast.shape[0] < net.horizon:
        raise ContractError(
            f"forecast horizon {forecast.shape[0]} shorter than decision horizon {net.horizon}"
        )
    lay = DeploymentLayout(net)
    t_count, n_edges, n_nodes = lay.t_count, lay.n_edges, net.n_nodes
    n = lay.n_vars

    objective = np.zeros(n)
    for t in range(1, t_count + 1):
        for e, edge in enumerate(net.edges):
            objective[lay.x_index(t, e)] = edge.cost
        for k in range(net.n_units):
            objective[lay.q_index(t, k)] = net.operation_cost
            objective[lay.s_index(t, k)] = net.interruption_cost

    # Stock recursion rows, then one flow-conservation row per node.
    eq_rows = []
    eq_rhs = []
    q0 = net.initial_stock()
    for t in range(1, t_count + 1):
        for v in range(n_nodes):
            row = np.zeros(n)
            row[lay.q_index(t, v)] = 1.0
            if t > 1:
                row[lay.q_index(t - 1, v)] = -1.0
            for e, edge in enumerate(net.edges):
                if edge.target == v and 1 <= t - edge.travel <= t_count and t - edge.travel <= t:
                    row[lay.x_index(t - edge.travel, e)] += -1.0
                if edge.source == v:
                    row[lay.x_index(t, e)] += 1.0
            eq_rows.append(row)
            eq_rhs.append(q0[v] if t == 1 else 0.0)
    for v in range(n_nodes):
        row = np.zeros(n)
        for e, edge in enumerate(net.edges):
            for t in range(1, t_count + 1):
                if edge.target == v:
                    row[lay.x_index(t, e)] += 1.0
                if edge.source == v:
                    row[lay.x_index(t, e)] -= 1.0
        eq_rows.append(row)
        eq_rhs.append(0.0)

    ineq_rows = []
    ineq_rhs = []
    for t in range(1, t_count + 1):
        for k in range(net.n_units):
            row = np.zeros(n)
            row[lay.q_index(t, k)] = -net.generator_capacity
            row[lay.s_index(t, k)] = -1.0
            ineq_rows.append(row)
            ineq_rhs.append(-forecast[t - 1, k])

    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    upper[: lay.q_offset] = net.edge_capacity
    upper[lay.q_offset : lay.s_offset] = net.total_stock
    mask = np.zeros(n, dtype=bool)
    mask[: lay.s_offset] = True  # shipments and stocks are integral

    start = np.zeros(n)
    for t in range(1, t_count + 1):
        for w in range(net.n_warehouses):
            start[lay.q_index(t, net.n_units + w)] = net.warehouse_stock[w]
        for k in range(net.n_units):
            start[lay.s_index(t, k)] = max(forecast[t - 1, k], 0.0)

    return MilpInstance(
        objective=objective,
        ineq_matrix=np.array(ineq_rows),
        ineq_rhs=np.array(ineq_rhs),
        eq_matrix=np.array(eq_rows),
        eq_rhs=np.array(eq_rhs),
        lower=lower,
        upper=upper,
        integer_mask=mask,
        feasible_start=start,
    )


def stocks_from_shipments(net: DeploymentNetwork, shipments: np.ndarray) -> np.ndarray:
    """(horizon+1, nodes) stock history implied by a shipment schedule."""
    t_count = net.horizon
    stocks = np.zeros((t_count + 1, net.n_nodes))
    stocks[0] = net.initial_stock()
    for t in range(1, t_count + 1):
        stocks[t] = stocks[t - 1]
        for e, edge in enumerate(net.edges):
            t_src = t - edge.travel
            if 1 <= t_src <= t_count:
                stocks[t, edge.target] += shipments[t_src - 1, e]
            stocks[t, edge.source] -= shipments[t - 1, e]
    return stocks


def check_deployment_feasible(
    decision: DeploymentDecision, net: DeploymentNetwork, require_integral: bool = True
) -> None:
    """Independent verification of the transport/stock/conservation system."""
    x = decision.shipments
    if x.shape != (net.horizon, len(net.edges)):
        raise ContractError(f"shipment schedule shape {x.shape} does not match network")
    if np.any(x < -1e-9) or np.any(x > net.edge_capacity + 1e-9):
        raise ContractError("shipment outside [0, edge capacity]")
    if require_integral and np.any(np.abs(x - np.round(x)) > 1e-6):
        raise ContractError("shipments must be integral")
    stocks = stocks_from_shipments(net, x)
    if np.any(stocks < -1e-9):
        raise ContractError("negative stock: schedule ships generators it does not hold")
    for v in range(net.n_nodes):
        inflow = sum(x[:, e].sum() for e, edge in enumerate(net.edges) if edge.target == v)
        outflow = sum(x[:, e].sum() for e, edge in enumerate(net.edges) if edge.source == v)
        if abs(inflow - outflow) > 1e-6:
            raise ContractError(f"flow conservation violated at node {v}")


def deployment_cost(
    decision: DeploymentDecision,
    true_outages: np.ndarray,
    net: DeploymentNetwork,
    require_integral: bool = True,
) -> float:
    """Realized cost of a schedule against the true outage series.

    ``true_outages`` covers decision periods 1..horizon, shape
    (horizon, units).
    """
    check_deployment_feasible(decision, net, require_integral=require_integral)
    true_outages = np.asarray(true_outages, dtype=np.float64)
    if true_outages.shape[0] < net.horizon or true_outages.shape[1] != net.n_units:
        raise ContractError("true outage series does not cover the decision horizon")
    x = decision.shipments
    transport = sum(
        float(x[:, e].sum()) * edge.cost for e, edge in enumerate(net.edges)
    )
    stocks = stocks_from_shipments(net, x)[1:, : net.n_units]
    operation = net.operation_cost * float(stocks.sum())
    uncovered = np.maximum(
        true_outages[: net.horizon] - stocks * net.generator_capacity, 0.0
    )
    outage = net.interruption_cost * float(uncovered.sum())
    return transport + operation + outage


class DeploymentProblem:
    """Decision-problem adapter used by training, baselines, and the CLI."""

    kind = "deployment"

    def __init__(self, network: DeploymentNetwork):
        self.network = network
        self.layout = DeploymentLayout(network)

    def _periods(self, series: np.ndarray) -> np.ndarray:
        series = np.asarray(series, dtype=np.float64)
        if series.shape[0] < self.network.horizon + 1:
            raise ContractError(
                f"series with {series.shape[0]} samples cannot cover "
                f"{self.network.horizon} decision periods"
            )
        return series[1 : self.network.horizon + 1]

    def build_instance(self, outage_series, timestamps=None, totals=None) -> MilpInstance:
        return build_deployment_instance(self.network, self._periods(outage_series))

    def decision_from_vector(self, vec: np.ndarray) -> DeploymentDecision:
        shipments = np.round(self.layout.shipments_of(np.asarray(vec)))
        shipments[shipments == 0.0] = 0.0
        return DeploymentDecision(shipments)

    def decision_cost(self, decision, outage_series, timestamps=None, totals=None) -> float:
        return deployment_cost(decision, self._periods(outage_series), self.network)

    def vector_cost(self, vec: np.ndarray, outage_series, timestamps=None, totals=None) -> float:
        """True cost of a (possibly fractional) instance-variable vector."""
        lay = self.layout
        net = self.network
        x = lay.shipments_of(np.asarray(vec, dtype=np.float64))
        q = lay.unit_stocks_of(np.asarray(vec, dtype=np.float64))
        true_y = self._periods(outage_series)
        transport = sum(float(x[:, e].sum()) * edge.cost for e, edge in enumerate(net.edges))
        operation = net.operation_cost * float(q.sum())
        uncovered = np.maximum(true_y - q * net.generator_capacity, 0.0)
        return transport + operation + net.interruption_cost * float(uncovered.sum())

    def vector_cost_gradient(self, vec, outage_series, timestamps=None, totals=None) -> np.ndarray:
        lay = self.layout
        net = self.network
        grad = np.zeros(lay.n_vars)
        for t in range(1, lay.t_count + 1):
            for e, edge in enumerate(net.edges):
                grad[lay.x_index(t, e)] = edge.cost
        q = lay.unit_stocks_of(np.asarray(vec, dtype=np.float64))
        true_y = self._periods(outage_series)
        short = true_y - q * net.generator_capacity > 0.0
        for t in range(1, lay.t_count + 1):
            for k in range(net.n_units):
                grad[lay.q_index(t, k)] = net.operation_cost - (
                    net.interruption_cost * net.generator_capacity if short[t - 1, k] else 0.0
                )
        return grad

    def forecast_gradient(self, back: QpBackward, outage_series, timestamps=None, totals=None) -> np.ndarray:
        """Map rhs sensitivities back onto the (steps, units) forecast grid."""
        series = np.asarray(outage_series, dtype=np.float64)
        grad = np.zeros_like(series)
        lay = self.layout
        for t in range(1, lay.t_count + 1):
            for k in range(self.network.n_units):
                # Shortfall rows carry -forecast on the rhs.
                grad[t, k] = -back.d_ineq_rhs[lay.shortfall_row(t, k)]
        return grad

    def solve_decision(self, outage_series, timestamps=None, totals=None, node_budget=DEFAULT_NODE_BUDGET):
        result = solve_milp(self.build_instance(outage_series), node_budget=node_budget)
        if result.status != "optimal":
            raise ContractError(f"deployment instance unexpectedly {result.status}")
        return self.decision_from_vector(result.x)


# -- undergrounding ----------------------------------------------------


def outage_exposure(outages: np.ndarray, timestamps: np.ndarray) -> np.ndarray:
    """Per-unit integral of the outage series (left endpoint rule)."""
    outages = np.asarray(outages, dtype=np.float64)
    timestamps = np.asarray(timestamps, dtype=np.float64)
    if outages.shape[0] != timestamps.shape[0]:
        raise ContractError("series and timestamps must align")
    widths = np.diff(timestamps)
    return (outages[:-1] * widths[:, None]).sum(axis=0)


def saidi(
    selected: np.ndarray, outages: np.ndarray, timestamps: np.ndarray, totals: np.ndarray
) -> float:
    """Average per-customer outage duration left unhardened by ``selected``."""
    selected = np.asarray(selected, dtype=np.float64)
    totals = np.asarray(totals, dtype=np.float64)
    exposure = outage_exposure(outages, timestamps)
    k = totals.size
    return float(((1.0 - selected) * exposure / totals).sum() / k)


def build_undergrounding_instance(
    forecast: np.ndarray, timestamps: np.ndarray, totals: np.ndarray, budget: int
) -> MilpInstance:
    """Budgeted binary hardening selection minimizing forecast SAIDI."""
    totals = np.asarray(totals, dtype=np.float64)
    k = totals.size
    if not 0 <= budget <= k:
        raise ContractError(f"budget {budget} outside [0, {k}]")
    weights = outage_exposure(forecast, timestamps) / (k * totals)
    return MilpInstance(
        objective=-weights,
        objective_offset=float(weights.sum()),
        ineq_matrix=np.ones((1, k)),
        ineq_rhs=[float(budget)],
        lower=np.zeros(k),
        upper=np.ones(k),
        integer_mask=np.ones(k, dtype=bool),
        feasible_start=np.zeros(k),
    )


def check_undergrounding_feasible(decision: UndergroundingDecision, budget: int) -> None:
    x = decision.selected
    if np.any(np.abs(x - np.round(x)) > 1e-6) or np.any(x < -1e-9) or np.any(x > 1 + 1e-9):
        raise ContractError("selection must be binary")
    if x.sum() > budget + 1e-6:
        raise ContractError("selection exceeds the hardening budget")


class UndergroundingProblem:
    kind = "undergrounding"

    def __init__(self, budget: int):
        self.budget = int(budget)

    def build_instance(self, outage_series, timestamps, totals) -> MilpInstance:
        return build_undergrounding_instance(outage_series, timestamps, totals, self.budget)

    def decision_from_vector(self, vec: np.ndarray) -> UndergroundingDecision:
        sel = np.round(np.asarray(vec, dtype=np.float64))
        sel[sel == 0.0] = 0.0
        return UndergroundingDecision(sel)

    def decision_cost(self, decision, outage_series, timestamps, totals) -> float:
        check_undergrounding_feasible(decision, self.budget)
        return saidi(decision.selected, outage_series, timestamps, totals)

    def vector_cost(self, vec, outage_series, timestamps, totals) -> float:
        return saidi(np.asarray(vec, dtype=np.float64), outage_series, timestamps, totals)

    def vector_cost_gradient(self, vec, outage_series, timestamps, totals) -> np.ndarray:
        totals = np.asarray(totals, dtype=np.float64)
        exposure = outage_exposure(outage_series, timestamps)
        return -exposure / (totals.size * totals)

    def forecast_gradient(self, back: QpBackward, outage_series, timestamps, totals) -> np.ndarray:
        series = np.asarray(outage_series, dtype=np.float64)
        timestamps = np.asarray(timestamps, dtype=np.float64)
        totals = np.asarray(totals, dtype=np.float64)
        k = totals.size
        widths = np.zeros(series.shape[0])
        widths[:-1] = np.diff(timestamps)
        # objective coefficient xi_k = -exposure_k / (K N_k)
        return back.d_linear_cost[None, :] * (-widths[:, None] / (k * totals[None, :]))

    def solve_decision(self, outage_series, timestamps, totals, node_budget=DEFAULT_NODE_BUDGET):
        result = solve_milp(
            self.build_instance(outage_series, timestamps, totals), node_budget=node_budget
        )
        if result.status != "optimal":
            raise ContractError(f"undergrounding instance unexpectedly {result.status}")
        return self.decision_from_vector(result.x)


def regret(
    decision,
    outage_series,
    timestamps,
    totals,
    problem,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> float:
    """Excess realized cost of a decision over the series-optimal one."""
    actual = problem.decision_cost(decision, outage_series, timestamps, totals)
    reference = problem.solve_decision(outage_series, timestamps, totals, node_budget=node_budget)
    return actual - problem.decision_cost(reference, outage_series, timestamps, totals)
