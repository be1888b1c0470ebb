"""Synthetic hazard-event generator with weather-modulated dynamics.

Ground truth follows the same compartmental model the forecaster
learns: per-unit failure and restoration rates are fixed sigmoid
functions of the covariates, with the first covariate acting as a
"storm severity" feature that only drives failures. Observations are
the hidden outage series under multiplicative lognormal noise, clamped
into [0, N]. Everything is a pure function of (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tape
from .errors import ConfigError, ContractError
from .ode import HazardEvent, seeded_initial_state, unroll


@dataclass(frozen=True)
class SyntheticConfig:
    n_units: int = 3
    customers_per_unit: float = 1000.0
    covariate_dim: int = 4
    n_steps: int = 24
    dt: float = 1.0
    n_events: int = 6
    failure_gain: float = 2.0
    restore_gain: float = 0.4
    noise_sigma: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 1:
            raise ConfigError("n_units must be at least 1")
        if self.n_events < 2:
            raise ConfigError("n_events must be at least 2 (one train, one test)")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        if self.n_steps < 1 or self.dt <= 0:
            raise ConfigError("n_steps and dt must be positive")
        if self.covariate_dim < 1:
            raise ConfigError("covariate_dim must be at least 1")


@dataclass
class SyntheticEvent:
    """Observed event plus the hidden trajectories that produced it."""

    event: HazardEvent
    true_unaffected: np.ndarray
    true_outaged: np.ndarray
    true_restored: np.ndarray


def true_rate_weights(config: SyntheticConfig) -> tuple[np.ndarray, np.ndarray]:
    """Fixed covariate weights of the ground-truth rate functions.

    Feature 0 (severity) feeds only the failure rate, so peak outages
    are monotone in it; restoration depends on the remaining features.
    """
    rng = np.random.default_rng([config.seed, 0xBEEF])
    w = rng.uniform(0.5, 1.5, size=config.covariate_dim)
    v = rng.uniform(0.5, 1.5, size=config.covariate_dim)
    w[0] = 3.0
    v[0] = 0.0
    return w, v


def true_rates(config: SyntheticConfig, covariates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit (failure, restore) rates before the 1/N failure scaling."""
    covariates = np.asarray(covariates, dtype=np.float64)
    w, v = true_rate_weights(config)
    centered = covariates - 0.5
    fail = config.failure_gain / (1.0 + np.exp(-(centered @ w)))
    rest = config.restore_gain / (1.0 + np.exp(-(centered @ v)))
    return fail, rest


def simulate_true(config: SyntheticConfig, covariates: np.ndarray):
    """Hidden (U, R, Y) trajectories for given covariates, seeded at one outage."""
    covariates = np.asarray(covariates, dtype=np.float64)
    k = covariates.shape[0]
    fail, rest = true_rates(config, covariates)
    total = config.customers_per_unit

    tape = Tape(record=False)
    n = tape.leaf(np.full((k, 1), total))
    fail_eff = tape.leaf((fail / total)[:, None])
    restore = tape.leaf(rest[:, None])
    state0 = seeded_initial_state(total, 0.0)
    u0 = tape.leaf(np.full((k, 1), state0.unaffected))
    y0 = tape.leaf(np.full((k, 1), state0.outaged))
    r0 = tape.leaf(np.full((k, 1), state0.restored))
    dts = np.full(config.n_steps, config.dt)
    us, rs, ys = unroll(tape, fail_eff, restore, n, u0, y0, r0, dts)
    stack = lambda seq: np.hstack([t.data for t in seq]).T.copy()
    return stack(us), stack(rs), stack(ys)


def generate_event(config: SyntheticConfig, event_index: int) -> SyntheticEvent:
    """One reproducible synthetic event; index selects the random stream."""
    rng = np.random.default_rng([config.seed, 1 + event_index])
    covariates = rng.uniform(0.0, 1.0, size=(config.n_units, config.covariate_dim))
    u, r, y = simulate_true(config, covariates)

    observed = y.copy()
    if config.noise_sigma > 0:
        noise = np.exp(config.noise_sigma * rng.standard_normal(size=y.shape))
        observed = y * noise
    observed = np.clip(observed, 0.0, config.customers_per_unit)

    timestamps = np.arange(config.n_steps + 1, dtype=np.float64) * config.dt
    event = HazardEvent(
        event_id=f"event-{event_index:03d}",
        covariates=covariates,
        observed_outages=observed,
        timestamps=timestamps,
        totals=np.full(config.n_units, config.customers_per_unit),
    )
    return SyntheticEvent(event, u, y, r)


def generate_events(config: SyntheticConfig) -> list[SyntheticEvent]:
    return [generate_event(config, i) for i in range(config.n_events)]


def split(items: list, train_fraction: float):
    """Deterministic index split: earliest events train, the rest test."""
    n = len(items)
    if n < 2:
        raise ContractError("need at least two events to split")
    n_train = int(round(train_fraction * n))
    n_train = max(1, min(n - 1, n_train))
    return items[:n_train], items[n_train:]
