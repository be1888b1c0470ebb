import numpy as np
import pytest

from gridres.autodiff import Tape
from gridres.errors import ContractError, DataError
from gridres.ode import (
    CompartmentState,
    ConstantRate,
    HazardEvent,
    OutageModel,
    RateNetwork,
    compartment_rhs,
    euler_integrate,
    ode_rhs,
    predict_event,
    seeded_initial_state,
)


def make_net(p=3, hidden=8, scale=1.0, seed=0):
    return RateNetwork.initialize(p, hidden, scale, np.random.default_rng(seed))


def constant_model(failure, restore):
    return OutageModel(ConstantRate(failure), ConstantRate(restore))


def test_rate_all_zero_weights_gives_midpoint():
    p = 4
    net = RateNetwork(np.zeros((p, 8)), np.zeros((1, 8)), np.zeros((8, 1)), np.zeros((1, 1)), 2.0)
    assert net.apply(np.array([3.0, -1.0, 0.0, 7.0])) == pytest.approx(2.0 * 0.5)


def test_rate_dead_input_coordinate():
    rng = np.random.default_rng(5)
    net = make_net(p=3, seed=5)
    net.w1[0, :] = 0.0  # kill feature 0
    z = rng.normal(size=3)
    z2 = z.copy()
    z2[0] += 100.0
    assert net.apply(z) == net.apply(z2)


def test_rate_matches_reference_formula():
    rng = np.random.default_rng(9)
    net = make_net(p=5, hidden=8, scale=3.0, seed=9)
    for _ in range(20):
        z = rng.normal(size=5)
        hidden = np.maximum(z @ net.w1 + net.b1[0], 0.0)
        pre = hidden @ net.w2[:, 0] + net.b2[0, 0]
        expected = 3.0 / (1.0 + np.exp(-pre))
        assert net.apply(z) == pytest.approx(expected, rel=1e-12)
        assert 0.0 < net.apply(z) < 3.0


def test_rate_batch_matches_single(tmp_path=None):
    rng = np.random.default_rng(17)
    net = make_net(p=4, hidden=8, scale=2.5, seed=3)
    z = rng.normal(size=(6, 4))
    tape = Tape(record=False)
    bound = net.bind(tape, "x")
    batch = bound.batch_rates(tape.leaf(z), tape.leaf(np.ones((6, 1))))
    singles = np.array([net.apply(z[i]) for i in range(6)])
    np.testing.assert_allclose(batch.data[:, 0], singles, rtol=1e-12)


def test_rhs_frozen_when_no_outages():
    du, dr, dy = compartment_rhs(500.0, 0.0, 0.01, 0.3)
    assert (du, dr, dy) == (0.0, 0.0, 0.0)


def test_rhs_hand_arithmetic():
    du, dr, dy = compartment_rhs(90.0, 10.0, 0.001, 0.1)
    assert du == pytest.approx(-0.9)
    assert dr == pytest.approx(1.0)
    assert dy == pytest.approx(-0.1)


def test_rhs_conserves_by_construction():
    rng = np.random.default_rng(2)
    for _ in range(100):
        u, y = rng.uniform(0, 500, size=2)
        du, dr, dy = compartment_rhs(u, y, rng.uniform(0, 0.01), rng.uniform(0, 1))
        assert du + dr + dy == 0.0


def test_ode_rhs_uses_model_rates():
    model = constant_model(failure=0.1, restore=0.1)
    state = CompartmentState(90.0, 10.0, 0.0)
    du, dr, dy = ode_rhs(state, np.zeros(2), model, total=100.0)
    assert du == pytest.approx(-0.9)
    assert dr == pytest.approx(1.0)
    assert dy == pytest.approx(-0.1)


def test_euler_zero_rate_hook_freezes_trajectory():
    net0 = RateNetwork.initialize(2, 4, 0.0, np.random.default_rng(0))
    net1 = RateNetwork.initialize(2, 4, 0.0, np.random.default_rng(1))
    model = OutageModel(net0, net1)
    traj = euler_integrate(CompartmentState(90.0, 10.0, 0.0), np.zeros(2), model, np.arange(5.0))
    for s in traj:
        assert (s.unaffected, s.outaged, s.restored) == (90.0, 10.0, 0.0)


def test_euler_single_step_hand_arithmetic():
    model = constant_model(failure=0.1, restore=0.1)  # effective 0.001 at N=100
    traj = euler_integrate(CompartmentState(90.0, 10.0, 0.0), np.zeros(1), model, [0.0, 1.0])
    s1 = traj[1]
    assert s1.unaffected == pytest.approx(89.1)
    assert s1.restored == pytest.approx(1.0)
    assert s1.outaged == pytest.approx(9.9)


def test_euler_rejects_nonmonotone_grid():
    model = constant_model(0.1, 0.1)
    with pytest.raises(ContractError):
        euler_integrate(CompartmentState(90, 10, 0), np.zeros(1), model, [0.0, 1.0, 1.0])


def test_conservation_and_monotonicity_random():
    rng = np.random.default_rng(31)
    for _ in range(50):
        total = rng.uniform(50, 5000)
        model = OutageModel(
            RateNetwork.initialize(3, 8, rng.uniform(0.5, 5.0), rng),
            RateNetwork.initialize(3, 8, rng.uniform(0.1, 1.0), rng),
        )
        y0 = rng.uniform(1, total / 2)
        state0 = CompartmentState(total - y0, y0, 0.0)
        ts = np.cumsum(rng.uniform(0.05, 0.5, size=12))
        traj = euler_integrate(state0, rng.normal(size=3), model, np.concatenate([[0], ts]))
        prev = traj[0]
        for s in traj:
            assert abs(s.total - total) < 1e-9 * total
            assert min(s.unaffected, s.outaged, s.restored) >= 0.0
        for a, b in zip(traj, traj[1:]):
            assert b.unaffected <= a.unaffected + 1e-9 * total
            assert b.restored >= a.restored - 1e-9 * total


def test_textbook_sir_reproduction():
    # Constant-rate variant against an independently coded SIR Euler loop.
    n, beta, gamma, dt, steps = 1000.0, 1.6, 0.25, 0.05, 80
    model = constant_model(failure=beta, restore=gamma)
    ts = np.arange(steps + 1) * dt
    traj = euler_integrate(CompartmentState(n - 5, 5, 0), np.zeros(1), model, ts)

    s, i, r = n - 5, 5.0, 0.0
    for j in range(1, steps + 1):
        ds = -beta * s * i / n * dt
        dr = gamma * i * dt
        s, r = s + ds, r + dr
        i = n - s - r
        assert traj[j].unaffected == pytest.approx(s, abs=1e-9 * n)
        assert traj[j].outaged == pytest.approx(i, abs=1e-9 * n)
        assert traj[j].restored == pytest.approx(r, abs=1e-9 * n)


def test_euler_first_order_convergence():
    model = constant_model(failure=1.2, restore=0.3)
    state0 = CompartmentState(950.0, 50.0, 0.0)
    horizon = 4.0

    def run(dt):
        ts = np.arange(0.0, horizon + dt / 2, dt)
        traj = euler_integrate(state0, np.zeros(1), model, ts)
        return ts, np.array([s.outaged for s in traj])

    ts_ref, y_ref = run(1.0 / 64.0)
    errors = []
    for dt in [1.0, 0.5, 0.25, 0.125]:
        ts, y = run(dt)
        idx = np.searchsorted(ts_ref, ts)
        errors.append(np.max(np.abs(y - y_ref[idx])))
    ratios = [errors[i] / errors[i + 1] for i in range(len(errors) - 1)]
    for r in ratios:
        assert 1.5 <= r <= 2.5


def make_event(seed=0, units=3, steps=8, p=2, total=200.0):
    rng = np.random.default_rng(seed)
    obs = rng.uniform(0, total / 2, size=(steps + 1, units))
    return HazardEvent(
        event_id=f"e{seed}",
        covariates=rng.normal(size=(units, p)),
        observed_outages=obs,
        timestamps=np.arange(steps + 1, dtype=float),
        totals=np.full(units, total),
    )


def test_predict_single_unit_reduces_to_euler():
    event = make_event(units=1)
    model = OutageModel(make_net(p=2, scale=2.0, seed=1), make_net(p=2, scale=0.5, seed=2))
    pred = predict_event(model, event)
    state0 = seeded_initial_state(200.0, event.observed_outages[0, 0])
    traj = euler_integrate(state0, event.covariates[0], model, event.timestamps)
    np.testing.assert_allclose(pred.outaged[:, 0], [s.outaged for s in traj], rtol=0, atol=1e-12)


def test_predict_permutation_equivariance():
    event = make_event(units=4)
    model = OutageModel(make_net(p=2, scale=2.0, seed=1), make_net(p=2, scale=0.5, seed=2))
    perm = np.array([2, 0, 3, 1])
    permuted = HazardEvent(
        "perm",
        event.covariates[perm],
        event.observed_outages[:, perm],
        event.timestamps,
        event.totals[perm],
    )
    base = predict_event(model, event)
    swapped = predict_event(model, permuted)
    np.testing.assert_array_equal(base.outaged[:, perm], swapped.outaged)


def test_predict_is_deterministic():
    event = make_event()
    model = OutageModel(make_net(p=2, seed=1), make_net(p=2, seed=2))
    a = predict_event(model, event)
    b = predict_event(model, event)
    np.testing.assert_array_equal(a.outaged, b.outaged)


def test_predict_taped_matches_plain():
    event = make_event()
    model = OutageModel(make_net(p=2, seed=1), make_net(p=2, seed=2))
    plain = predict_event(model, event)
    taped = predict_event(model, event, tape=Tape())
    np.testing.assert_array_equal(plain.outaged, taped.outaged)
    assert taped.tape is not None and len(taped.outage_nodes) == event.n_steps + 1


def test_event_validation():
    ok = make_event()
    with pytest.raises(DataError):
        HazardEvent("bad", ok.covariates, ok.observed_outages, ok.timestamps[::-1].copy(), ok.totals)
    with pytest.raises(DataError):
        HazardEvent("bad", ok.covariates, ok.observed_outages + 1e6, ok.timestamps, ok.totals)


def test_seeded_initial_state():
    s = seeded_initial_state(100.0, 0.0)
    assert s.outaged == 1.0 and s.unaffected == 99.0 and s.restored == 0.0
    s = seeded_initial_state(100.0, 40.0)
    assert s.outaged == 40.0 and s.unaffected == 60.0
