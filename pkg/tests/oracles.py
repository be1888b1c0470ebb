"""Brute-force reference implementations shared by unit and acceptance tests."""

import itertools

import numpy as np

from gridres.problems import (
    DeploymentDecision,
    DeploymentNetwork,
    check_deployment_feasible,
    deployment_cost,
    saidi,
)


def brute_force_deployment(net: DeploymentNetwork, true_periods: np.ndarray, max_per_slot=None):
    """Enumerate every integral shipment schedule; return (cost, schedule).

    Exponential in horizon x edges; callers keep the slot cap tiny.
    """
    n_slots = net.horizon * len(net.edges)
    cap = int(min(net.edge_capacity, net.total_stock))
    if max_per_slot is not None:
        cap = min(cap, max_per_slot)
    best_cost, best = np.inf, None
    for combo in itertools.product(range(cap + 1), repeat=n_slots):
        schedule = np.array(combo, dtype=float).reshape(net.horizon, len(net.edges))
        decision = DeploymentDecision(schedule)
        try:
            check_deployment_feasible(decision, net)
        except Exception:
            continue
        cost = deployment_cost(decision, true_periods, net)
        if cost < best_cost - 1e-12:
            best_cost, best = cost, schedule
    return best_cost, best


def brute_force_undergrounding(outages, timestamps, totals, budget):
    """Exhaustive subset search; return (saidi, selection)."""
    k = np.asarray(totals).size
    best_cost, best = np.inf, None
    for size in range(budget + 1):
        for subset in itertools.combinations(range(k), size):
            sel = np.zeros(k)
            sel[list(subset)] = 1.0
            cost = saidi(sel, outages, timestamps, totals)
            if cost < best_cost - 1e-12:
                best_cost, best = cost, sel
    return best_cost, best
