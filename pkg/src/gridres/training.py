"""Two-phase training of the outage model and its evaluation harness.

Phase one fits the rate networks to observed outage series by plain
mini-batch gradient descent on MSE. Phase two finetunes them through
the decision layer: each event's forecast feeds a quadratically
regularized relaxation of the decision problem, the realized cost of
the relaxed decision is differentiated through the KKT system back to
the forecast, and then through the unrolled integrator to the
parameters. A lambda-weighted MSE step after the per-event decision
steps keeps predictions anchored to the data.

Decision quality is always reported from re-solved integer instances,
never from the relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .errors import ConfigError, NumericError, TrainingDivergedError
from .ode import HazardEvent, OutageModel, predict_event
from .solvers import qp_backward, relax_to_qp, solve_qp
from .solvers.milp import DEFAULT_NODE_BUDGET
from .synthdata import SyntheticEvent


@dataclass
class TrainConfig:
    learning_rate_pretrain: float = 1e-2
    learning_rate_finetune: float = 1e-3
    mse_weight: float = 1.0  # trade-off multiplier on the prediction loss
    pretrain_epochs: int = 150
    finetune_epochs: int = 15
    batch_size: int = 1
    reg_weight: float = 0.1  # quadratic regularization of the relaxed layer
    grad_clip: float = 10.0
    seed: int = 0
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        if self.learning_rate_pretrain <= 0 or self.learning_rate_finetune <= 0:
            raise ConfigError("learning rates must be positive")
        if self.mse_weight < 0:
            raise ConfigError("mse_weight must be nonnegative")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ConfigError("epoch counts must be nonnegative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.reg_weight <= 0:
            raise ConfigError("reg_weight must be positive")


def _event_of(item) -> HazardEvent:
    return item.event if isinstance(item, SyntheticEvent) else item


def _truth_of(item) -> np.ndarray:
    """Series decisions are scored against: hidden truth when available."""
    if isinstance(item, SyntheticEvent):
        return item.true_outaged
    return item.observed_outages


def fit_normalization(model: OutageModel, events: list[HazardEvent]) -> None:
    model.set_normalization(np.vstack([ev.covariates for ev in events]))


# -- losses -------------------------------------------------------------


def mse_loss(model: OutageModel, events: list[HazardEvent]) -> float:
    """Mean squared deviation between observed and predicted outages."""
    if not events:
        raise ConfigError("mse_loss needs at least one event")
    sse = 0.0
    count = 0
    for ev in events:
        pred = predict_event(model, ev)
        sse += float(((ev.observed_outages - pred.outaged) ** 2).sum())
        count += ev.observed_outages.size
    return sse / count


def _accumulate(target: dict[str, np.ndarray], grads: dict[str, np.ndarray], weight: float = 1.0):
    for name, g in grads.items():
        if name in target:
            target[name] += weight * g
        else:
            target[name] = weight * g


def _clip_norm(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if clip > 0 and norm > clip:
        factor = clip / norm
        return {k: v * factor for k, v in grads.items()}
    return grads


def _apply_step(model: OutageModel, grads: dict[str, np.ndarray], lr: float):
    params = model.parameters()
    for name, g in grads.items():
        model.set_parameter(name, params[name] - lr * g)


def pretrain(model: OutageModel, events: list[HazardEvent], config: TrainConfig):
    """Mini-batch gradient descent on the prediction loss.

    Returns a trained copy of the model and the per-epoch loss curve
    (training-set MSE evaluated after each epoch).
    """
    model = model.copy()
    if model.norm_mean is None:
        fit_normalization(model, events)
    curve: list[float] = []
    rng = np.random.default_rng([config.seed, 0x5EED])
    for epoch in range(config.pretrain_epochs):
        order = rng.permutation(len(events))
        try:
            for start in range(0, len(order), config.batch_size):
                batch = [events[i] for i in order[start : start + config.batch_size]]
                grads: dict[str, np.ndarray] = {}
                count = 0
                for ev in batch:
                    _, g, c = _mse_event_terms(model, ev)
                    _accumulate(grads, g)
                    count += c
                grads = {k: v / count for k, v in grads.items()}
                _apply_step(model, _clip_norm(grads, config.grad_clip), config.learning_rate_pretrain)
            epoch_loss = mse_loss(model, events)
        except NumericError as exc:
            raise TrainingDivergedError(epoch) from exc
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch)
        curve.append(epoch_loss)
    return model, curve


def _mse_event_terms(model: OutageModel, event: HazardEvent):
    tape = Tape()
    pred = predict_event(model, event, tape)
    total = None
    for j in range(event.observed_outages.shape[0]):
        obs = tape.leaf(event.observed_outages[j][:, None])
        node = pred.tape_outage_tensor(j)
        term = tape.sum(tape.square(tape.sub(obs, node)))
        total = term if total is None else tape.add(total, term)
    grads = tape.backward(total)
    return float(total.data), pred.bound.parameter_gradients(grads), event.observed_outages.size


# -- decision-focused loss ----------------------------------------------


def reference_solutions(items, problem, node_budget: int = DEFAULT_NODE_BUDGET, use_truth: bool = True):
    """Per-event optimal decisions/costs on the scoring series (cached by caller)."""
    out = {}
    for item in items:
        ev = _event_of(item)
        series = _truth_of(item) if use_truth else ev.observed_outages
        decision = problem.solve_decision(series, ev.timestamps, ev.totals, node_budget=node_budget)
        cost = problem.decision_cost(decision, series, ev.timestamps, ev.totals)
        out[ev.event_id] = (decision, cost)
    return out


def gdf_loss(
    model: OutageModel,
    event: HazardEvent,
    problem,
    config: TrainConfig,
    reference_cost: float,
    with_grads: bool = True,
):
    """Decision regret of the relaxed layer on one event.

    Returns (loss, parameter gradients). The loss is the realized cost
    of the relaxed decision under the event's series minus the cached
    series-optimal cost; gradients flow through the KKT sensitivities
    of the relaxed solve and the unrolled integration.
    """
    tape = Tape() if with_grads else None
    pred = predict_event(model, event, tape)
    forecast = pred.outaged
    instance = problem.build_instance(forecast, event.timestamps, event.totals)
    qp = relax_to_qp(instance, config.reg_weight)
    sol = solve_qp(qp)

    observed = event.observed_outages
    cost = problem.vector_cost(sol.x, observed, event.timestamps, event.totals)
    loss = cost - reference_cost
    if not with_grads:
        return loss, {}

    upstream = problem.vector_cost_gradient(sol.x, observed, event.timestamps, event.totals)
    back = qp_backward(sol, qp, upstream)
    fgrad = problem.forecast_gradient(back, forecast, event.timestamps, event.totals)
    seeds = {}
    for j in range(forecast.shape[0]):
        if np.any(fgrad[j] != 0.0):
            seeds[pred.outage_nodes[j]] = fgrad[j][:, None]
    if not seeds:
        return loss, {name: np.zeros_like(v) for name, v in model.parameters().items()}
    node_grads = pred.tape.backward_from(seeds)
    return loss, pred.bound.parameter_gradients(node_grads)


def finetune_gdf(model: OutageModel, events: list[HazardEvent], config: TrainConfig, problem):
    """Decision-focused finetuning per the combined objective.

    Each epoch applies one decision-regret gradient step per event (in
    event order), then lambda-weighted MSE mini-batch steps. Returns
    the finetuned copy and a per-epoch (decision loss, mse) curve.
    """
    model = model.copy()
    if model.norm_mean is None:
        fit_normalization(model, events)
    references = reference_solutions(events, problem, node_budget=config.node_budget, use_truth=False)
    rng = np.random.default_rng([config.seed, 0xF17E])
    curve: list[tuple[float, float]] = []
    for epoch in range(config.finetune_epochs):
        epoch_losses = []
        try:
            for ev in events:
                loss, grads = gdf_loss(model, ev, problem, config, references[ev.event_id][1])
                epoch_losses.append(loss)
                _apply_step(model, _clip_norm(grads, config.grad_clip), config.learning_rate_finetune)
            if config.mse_weight > 0:
                order = rng.permutation(len(events))
                for start in range(0, len(order), config.batch_size):
                    batch = [events[i] for i in order[start : start + config.batch_size]]
                    grads = {}
                    count = 0
                    for ev in batch:
                        _, g, c = _mse_event_terms(model, ev)
                        _accumulate(grads, g)
                        count += c
                    grads = {k: config.mse_weight * v / count for k, v in grads.items()}
                    _apply_step(model, _clip_norm(grads, config.grad_clip), config.learning_rate_finetune)
            epoch_mse = mse_loss(model, events)
        except NumericError as exc:
            raise TrainingDivergedError(epoch) from exc
        if not np.isfinite(epoch_mse):
            raise TrainingDivergedError(epoch)
        curve.append((float(np.mean(epoch_losses)), epoch_mse))
    return model, curve


# -- evaluation ----------------------------------------------------------


@dataclass
class EvalRecord:
    event_id: str
    mse: float
    decision_cost: float
    regret: float


def evaluate(
    model: OutageModel,
    items,
    problem,
    references: dict | None = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> list[EvalRecord]:
    """Forecast, solve the integer instance, and score against the truth."""
    if references is None:
        references = reference_solutions(items, problem, node_budget=node_budget)
    records = []
    for item in items:
        ev = _event_of(item)
        truth = _truth_of(item)
        pred = predict_event(model, ev)
        mse = float(((ev.observed_outages - pred.outaged) ** 2).mean())
        decision = problem.solve_decision(
            pred.outaged, ev.timestamps, ev.totals, node_budget=node_budget
        )
        cost = problem.decision_cost(decision, truth, ev.timestamps, ev.totals)
        records.append(EvalRecord(ev.event_id, mse, cost, cost - references[ev.event_id][1]))
    return records


def aggregate(records: list[EvalRecord]) -> dict[str, float]:
    """Mean and sample standard deviation of each metric over events."""

    def stats(values):
        arr = np.array(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return float(arr.mean()), std

    mse_m, mse_s = stats([r.mse for r in records])
    cost_m, cost_s = stats([r.decision_cost for r in records])
    reg_m, reg_s = stats([r.regret for r in records])
    return {
        "mse_mean": mse_m,
        "mse_std": mse_s,
        "cost_mean": cost_m,
        "cost_std": cost_s,
        "regret_mean": reg_m,
        "regret_std": reg_s,
    }
