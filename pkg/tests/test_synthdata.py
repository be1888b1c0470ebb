import numpy as np
import pytest

from gridres.errors import ConfigError, ContractError
from gridres.synthdata import (
    SyntheticConfig,
    generate_event,
    generate_events,
    simulate_true,
    split,
    true_rates,
)


def test_config_validation():
    with pytest.raises(ConfigError):
        SyntheticConfig(n_events=1)
    with pytest.raises(ConfigError):
        SyntheticConfig(noise_sigma=-0.1)
    with pytest.raises(ConfigError):
        SyntheticConfig(n_units=0)


def test_zero_noise_observation_equals_truth():
    config = SyntheticConfig(noise_sigma=0.0, seed=3)
    ev = generate_event(config, 0)
    np.testing.assert_array_equal(ev.event.observed_outages, ev.true_outaged)


def test_same_seed_bit_identical():
    config = SyntheticConfig(seed=11)
    a = generate_event(config, 2)
    b = generate_event(config, 2)
    np.testing.assert_array_equal(a.event.covariates, b.event.covariates)
    np.testing.assert_array_equal(a.event.observed_outages, b.event.observed_outages)
    np.testing.assert_array_equal(a.true_outaged, b.true_outaged)


def test_distinct_events_differ():
    config = SyntheticConfig(seed=11)
    a = generate_event(config, 0)
    b = generate_event(config, 1)
    assert not np.array_equal(a.event.covariates, b.event.covariates)


def test_severity_monotonicity_of_peak():
    config = SyntheticConfig(seed=5, n_units=2)
    z = np.full((2, config.covariate_dim), 0.5)
    z[0, 0] = 0.0  # calm
    z[1, 0] = 1.0  # severe
    _, _, y = simulate_true(config, z)
    assert y[:, 1].max() > y[:, 0].max()


def test_true_rates_severity_only_hits_failures():
    config = SyntheticConfig(seed=5)
    z_lo = np.full((1, config.covariate_dim), 0.5)
    z_hi = z_lo.copy()
    z_hi[0, 0] = 1.0
    fail_lo, rest_lo = true_rates(config, z_lo)
    fail_hi, rest_hi = true_rates(config, z_hi)
    assert fail_hi[0] > fail_lo[0]
    assert rest_hi[0] == rest_lo[0]


def test_hidden_trajectories_conserve_and_bound_observations():
    config = SyntheticConfig(seed=9, noise_sigma=0.4)
    for ev in generate_events(config):
        total = config.customers_per_unit
        sums = ev.true_unaffected + ev.true_outaged + ev.true_restored
        assert np.max(np.abs(sums - total)) < 1e-9 * total
        obs = ev.event.observed_outages
        assert obs.min() >= 0.0 and obs.max() <= total


def test_split_arithmetic():
    events = list(range(3))
    train, test = split(events, 1.0 / 3.0)
    assert (len(train), len(test)) == (1, 2)
    train, test = split(list(range(2)), 0.5)
    assert (len(train), len(test)) == (1, 1)
    assert split(list(range(5)), 0.5)[0] == split(list(range(5)), 0.5)[0]
    with pytest.raises(ContractError):
        split([1], 0.5)


def test_split_always_leaves_test_events():
    train, test = split(list(range(4)), 0.99)
    assert len(test) >= 1
    train, test = split(list(range(4)), 0.0)
    assert len(train) >= 1
