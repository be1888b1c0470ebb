"""Compartmental outage dynamics with covariate-conditioned rates.

Each service unit carries three customer pools: unaffected (U),
outaged (Y), and restored (R), summing to the unit's customer total N.
Failures move customers U -> Y at an effective rate ``fail/N`` scaled
by the U*Y product; restorations move Y -> R at a per-outage rate.
Both rates come from small feed-forward networks of the unit's
covariates (or from plain constants in the compact two-parameter
variant). Trajectories are produced by explicit Euler steps on the
observation grid, with a post-step clamp that keeps every pool inside
[0, N] and re-assigns the clamp residue to Y so the total is conserved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Tensor
from .errors import ContractError, DataError, DimensionError

# One customer-equivalent: the minimum outage seed that un-freezes the
# dynamics when the first observation is zero (Y=0 is a fixed point).
MIN_OUTAGE_SEED = 1.0


@dataclass
class CompartmentState:
    """Customer pools of one service unit at one instant."""

    unaffected: float
    outaged: float
    restored: float

    @property
    def total(self) -> float:
        return self.unaffected + self.outaged + self.restored

    def validate(self, total: float | None = None) -> None:
        n = self.total if total is None else total
        if min(self.unaffected, self.outaged, self.restored) < -1e-9:
            raise DataError(f"negative compartment in {self}")
        if total is not None and abs(self.total - total) > 1e-6 * max(1.0, total):
            raise DataError(f"compartments sum to {self.total}, expected {total}")


@dataclass
class HazardEvent:
    """Observed outage record of one hazard event.

    ``covariates`` is (units, features); ``observed_outages`` is
    (timestamps, units); ``totals`` the per-unit customer counts.
    """

    event_id: str
    covariates: np.ndarray
    observed_outages: np.ndarray
    timestamps: np.ndarray
    totals: np.ndarray

    def __post_init__(self):
        self.covariates = np.asarray(self.covariates, dtype=np.float64)
        self.observed_outages = np.asarray(self.observed_outages, dtype=np.float64)
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.totals = np.asarray(self.totals, dtype=np.float64)
        k = self.covariates.shape[0]
        if self.observed_outages.ndim != 2 or self.observed_outages.shape[1] != k:
            raise DataError(
                f"event {self.event_id}: observed series is "
                f"{self.observed_outages.shape}, expected (steps, {k})"
            )
        if self.totals.shape != (k,):
            raise DataError(f"event {self.event_id}: totals shape {self.totals.shape}")
        if self.timestamps.shape != (self.observed_outages.shape[0],):
            raise DataError(f"event {self.event_id}: timestamp/series length mismatch")
        if np.any(np.diff(self.timestamps) <= 0):
            raise DataError(f"event {self.event_id}: timestamps not strictly increasing")
        if np.any(self.observed_outages < 0) or np.any(
            self.observed_outages > self.totals[None, :] * (1 + 1e-9)
        ):
            raise DataError(f"event {self.event_id}: observations outside [0, N]")

    @property
    def n_units(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_steps(self) -> int:
        return self.timestamps.shape[0] - 1


class RateNetwork:
    """Two-layer perceptron emitting a bounded positive rate.

    forward: rate_scale * sigmoid(relu(z @ w1 + b1) @ w2 + b2), so the
    output lies in (0, rate_scale) for any finite input.
    """

    def __init__(self, w1, b1, w2, b2, rate_scale: float):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if rate_scale < 0:
            raise ContractError("rate_scale must be nonnegative")
        self.rate_scale = float(rate_scale)
        p, h = self.w1.shape
        if self.b1.shape != (1, h) or self.w2.shape != (h, 1) or self.b2.shape != (1, 1):
            raise DimensionError("inconsistent rate-network parameter shapes")

    @classmethod
    def initialize(cls, input_dim: int, hidden: int, rate_scale: float, rng) -> "RateNetwork":
        # uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer
        lim1 = 1.0 / np.sqrt(input_dim)
        lim2 = 1.0 / np.sqrt(hidden)
        return cls(
            rng.uniform(-lim1, lim1, size=(input_dim, hidden)),
            rng.uniform(-lim1, lim1, size=(1, hidden)),
            rng.uniform(-lim2, lim2, size=(hidden, 1)),
            rng.uniform(-lim2, lim2, size=(1, 1)),
            rate_scale,
        )

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def apply(self, z: np.ndarray) -> float:
        """Rate for a single covariate vector."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.input_dim,):
            raise DimensionError(f"covariate length {z.shape} != {self.input_dim}")
        h = np.maximum(z[None, :] @ self.w1 + self.b1, 0.0)
        pre = float((h @ self.w2 + self.b2)[0, 0])
        sig = 1.0 / (1.0 + np.exp(-pre)) if pre >= 0 else np.exp(pre) / (1.0 + np.exp(pre))
        return self.rate_scale * sig

    def bind(self, tape: Tape, prefix: str):
        return _BoundNetwork(tape, self, prefix)


class _BoundNetwork:
    def __init__(self, tape: Tape, net: RateNetwork, prefix: str):
        self.tape = tape
        self.scale = net.rate_scale
        self.leaves = {f"{prefix}.{k}": tape.leaf(v) for k, v in net.parameters().items()}
        self.prefix = prefix

    def batch_rates(self, z: Tensor, ones_col: Tensor) -> Tensor:
        """Rates for a (units, features) covariate tensor -> (units, 1)."""
        t = self.tape
        lv = self.leaves
        h = t.relu(
            t.add(t.matmul(z, lv[f"{self.prefix}.w1"]), t.matmul(ones_col, lv[f"{self.prefix}.b1"]))
        )
        pre = t.add(
            t.matmul(h, lv[f"{self.prefix}.w2"]), t.matmul(ones_col, lv[f"{self.prefix}.b2"])
        )
        return t.scale(t.sigmoid(pre), self.scale)


class ConstantRate:
    """Compact variant: a single trainable rate coefficient."""

    def __init__(self, value: float):
        self.value = float(value)

    def parameters(self) -> dict[str, np.ndarray]:
        return {"value": np.asarray(self.value)}

    def apply(self, z=None) -> float:
        return self.value

    def bind(self, tape: Tape, prefix: str):
        return _BoundConstant(tape, self, prefix)


class _BoundConstant:
    def __init__(self, tape: Tape, rate: ConstantRate, prefix: str):
        self.tape = tape
        self.prefix = prefix
        self.leaves = {f"{prefix}.value": tape.leaf(np.full((1, 1), rate.value))}

    def batch_rates(self, z: Tensor, ones_col: Tensor) -> Tensor:
        return self.tape.matmul(ones_col, self.leaves[f"{self.prefix}.value"])


class OutageModel:
    """Failure/restoration rate pair plus covariate normalization."""

    def __init__(self, failure, restore, norm_mean=None, norm_std=None):
        self.failure = failure
        self.restore = restore
        self.norm_mean = None if norm_mean is None else np.asarray(norm_mean, dtype=np.float64)
        self.norm_std = None if norm_std is None else np.asarray(norm_std, dtype=np.float64)

    @classmethod
    def initialize(
        cls,
        input_dim: int,
        hidden: int = 32,
        rate_scale_failure: float = 5.0,
        rate_scale_restore: float = 1.0,
        seed: int = 0,
    ) -> "OutageModel":
        rng = np.random.default_rng(seed)
        return cls(
            RateNetwork.initialize(input_dim, hidden, rate_scale_failure, rng),
            RateNetwork.initialize(input_dim, hidden, rate_scale_restore, rng),
        )

    def set_normalization(self, covariates: np.ndarray) -> None:
        """Fit per-feature z-score stats (typically on the training set)."""
        covariates = np.asarray(covariates, dtype=np.float64)
        self.norm_mean = covariates.mean(axis=0)
        std = covariates.std(axis=0)
        self.norm_std = np.where(std > 1e-12, std, 1.0)

    def normalize(self, covariates: np.ndarray) -> np.ndarray:
        if self.norm_mean is None:
            return np.asarray(covariates, dtype=np.float64)
        return (covariates - self.norm_mean) / self.norm_std

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, net in (("failure", self.failure), ("restore", self.restore)):
            for k, v in net.parameters().items():
                out[f"{prefix}.{k}"] = v
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.parameters().values()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for name, v in self.parameters().items():
            n = v.size
            self.set_parameter(name, flat[offset : offset + n].reshape(v.shape))
            offset += n
        if offset != flat.size:
            raise DimensionError("flat parameter vector has wrong length")

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        prefix, attr = name.split(".", 1)
        net = self.failure if prefix == "failure" else self.restore
        if isinstance(net, ConstantRate):
            net.value = float(value)
        else:
            setattr(net, attr, np.asarray(value, dtype=np.float64).reshape(getattr(net, attr).shape))

    def copy(self) -> "OutageModel":
        import copy as _copy

        return _copy.deepcopy(self)

    def bind(self, tape: Tape) -> "BoundOutageModel":
        return BoundOutageModel(tape, self)


class BoundOutageModel:
    """Model parameters entered as leaves of one tape."""

    def __init__(self, tape: Tape, model: OutageModel):
        self.tape = tape
        self.model = model
        self.failure = model.failure.bind(tape, "failure")
        self.restore = model.restore.bind(tape, "restore")
        self.leaves: dict[str, Tensor] = {}
        self.leaves.update(self.failure.leaves)
        self.leaves.update(self.restore.leaves)

    def parameter_gradients(self, grads_by_node: dict[int, np.ndarray]) -> dict[str, np.ndarray]:
        return {
            name: grads_by_node.get(t.node_id, np.zeros_like(t.data))
            for name, t in self.leaves.items()
        }


# -- dynamics ----------------------------------------------------------


def compartment_rhs(unaffected, outaged, failure_eff, restore_rate):
    """Derivatives (dU, dR, dY); dY is defined as -(dU + dR) exactly."""
    du = -(failure_eff * outaged * unaffected)
    dr = restore_rate * outaged
    return du, dr, -(du + dr)


def ode_rhs(state: CompartmentState, covariates, model: OutageModel, total: float):
    """Model-driven derivative of one unit's state."""
    z = model.normalize(np.asarray(covariates, dtype=np.float64))
    fail_eff = model.failure.apply(z) / total
    rest = model.restore.apply(z)
    return compartment_rhs(state.unaffected, state.outaged, fail_eff, rest)


def _clamp_step(tape, u, r, n):
    """Clamp u and r into [0, n], recompute y from the residue, keep y >= 0."""
    u = tape.hinge(u)
    u = tape.sub(n, tape.hinge(tape.sub(n, u)))
    r = tape.hinge(r)
    r = tape.sub(n, tape.hinge(tape.sub(n, r)))
    y = tape.hinge(tape.sub(tape.sub(n, u), r))
    r = tape.sub(tape.sub(n, u), y)
    return u, r, y


def unroll(tape, fail_eff: Tensor, restore: Tensor, n: Tensor, u0, y0, r0, dts):
    """Euler-integrate the compartment system on a tape.

    All state tensors are (units, 1) columns; ``dts`` is the sequence of
    step widths. Returns per-step lists of (u, r, y) tensors, index 0
    holding the initial state.
    """
    u, y, r = u0, y0, r0
    us, rs, ys = [u], [r], [y]
    for dt in dts:
        du = tape.scale(tape.mul(tape.mul(fail_eff, y), u), -float(dt))
        dr = tape.scale(tape.mul(restore, y), float(dt))
        u_next = tape.add(u, du)
        r_next = tape.add(r, dr)
        u, r, y = _clamp_step(tape, u_next, r_next, n)
        us.append(u)
        rs.append(r)
        ys.append(y)
    return us, rs, ys


def euler_integrate(
    state0: CompartmentState, covariates, model: OutageModel, timestamps
) -> list[CompartmentState]:
    """Trajectory of one unit on the given strictly increasing grid."""
    timestamps = np.asarray(timestamps, dtype=np.float64)
    if timestamps.ndim != 1 or timestamps.size < 1:
        raise ContractError("timestamps must be a non-empty 1-D grid")
    if np.any(np.diff(timestamps) <= 0):
        raise ContractError("timestamps must be strictly increasing")
    total = state0.total
    z = model.normalize(np.asarray(covariates, dtype=np.float64))

    tape = Tape(record=False)
    bound = model.bind(tape)
    z_t = tape.leaf(z[None, :])
    ones = tape.leaf(np.ones((1, 1)))
    fail = bound.failure.batch_rates(z_t, ones)
    rest = bound.restore.batch_rates(z_t, ones)
    fail_eff = tape.scale(fail, 1.0 / total)
    n = tape.leaf(np.full((1, 1), total))
    u0 = tape.leaf(np.full((1, 1), state0.unaffected))
    y0 = tape.leaf(np.full((1, 1), state0.outaged))
    r0 = tape.leaf(np.full((1, 1), state0.restored))
    us, rs, ys = unroll(tape, fail_eff, rest, n, u0, y0, r0, np.diff(timestamps))
    return [
        CompartmentState(float(u.data[0, 0]), float(y.data[0, 0]), float(r.data[0, 0]))
        for u, y, r in zip(us, ys, rs)
    ]


def seeded_initial_state(total: float, first_observation: float) -> CompartmentState:
    """Initial state warm-started from the first observed outage count.

    The all-unaffected start [N, 0, 0] is a fixed point of the dynamics,
    so the outage pool is seeded with at least one customer-equivalent.
    """
    y0 = min(max(first_observation, MIN_OUTAGE_SEED), total)
    return CompartmentState(total - y0, y0, 0.0)


@dataclass
class EventPrediction:
    """Per-event predicted trajectories, optionally with tape handles."""

    unaffected: np.ndarray
    outaged: np.ndarray
    restored: np.ndarray
    timestamps: np.ndarray
    outage_nodes: list[int] = field(default_factory=list)
    tape: Tape | None = None
    bound: BoundOutageModel | None = None
    outage_tensors: list[Tensor] | None = None

    def tape_outage_tensor(self, step: int) -> Tensor:
        if self.outage_tensors is None:
            raise ContractError("prediction was not recorded on a tape")
        return self.outage_tensors[step]


def predict_event(model: OutageModel, event: HazardEvent, tape: Tape | None = None) -> EventPrediction:
    """Integrate all of an event's units on the observation grid.

    Units evolve independently; passing a recording ``tape`` exposes the
    per-step outage tensors for gradient propagation.
    """
    z = model.normalize(event.covariates)
    if isinstance(model.failure, RateNetwork) and z.shape[1] != model.failure.input_dim:
        raise DimensionError(
            f"event covariate dimension {z.shape[1]} != model input {model.failure.input_dim}"
        )
    k = event.n_units
    t = tape if tape is not None else Tape(record=False)
    bound = model.bind(t)
    z_t = t.leaf(z)
    ones = t.leaf(np.ones((k, 1)))
    fail = bound.failure.batch_rates(z_t, ones)
    rest = bound.restore.batch_rates(z_t, ones)
    inv_n = t.leaf((1.0 / event.totals)[:, None])
    fail_eff = t.mul(fail, inv_n)
    n = t.leaf(event.totals[:, None])

    y0_vals = np.minimum(np.maximum(event.observed_outages[0], MIN_OUTAGE_SEED), event.totals)
    u0 = t.leaf((event.totals - y0_vals)[:, None])
    y0 = t.leaf(y0_vals[:, None])
    r0 = t.leaf(np.zeros((k, 1)))

    us, rs, ys = unroll(t, fail_eff, rest, n, u0, y0, r0, np.diff(event.timestamps))
    recording = tape is not None
    return EventPrediction(
        unaffected=np.hstack([u.data for u in us]).T.copy(),
        outaged=np.hstack([y.data for y in ys]).T.copy(),
        restored=np.hstack([r.data for r in rs]).T.copy(),
        timestamps=event.timestamps.copy(),
        outage_nodes=[y.node_id for y in ys],
        tape=t if recording else None,
        bound=bound if recording else None,
        outage_tensors=ys if recording else None,
    )
