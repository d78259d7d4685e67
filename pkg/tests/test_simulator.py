import numpy as np
import pytest

from coevsir.errors import ConfigError, EventBudgetExceeded
from coevsir.model import double_peak_scenario
from coevsir.simulator import (I, R, S, empirical_type_distribution, init_state, replicate_seed,
                               run_ensemble, simulate, simulate_mimicking,
                               snapshot_type_distribution)
from coevsir.solver import solve

from conftest import constant_config


def small(**kw):
    base = dict(n_vertices=120, sample_points=101)
    base.update(kw)
    return double_peak_scenario(**base)


def test_initial_graph_density_and_infections():
    config = small(n_vertices=400)
    state = init_state(config, replicate_seed(0, 0))
    state.check()
    n = state.n
    pairs = n * (n - 1) / 2
    density = state.adjacency.sum() / 2 / pairs
    assert abs(density - config.p0) < 3 * np.sqrt(config.p0 * (1 - config.p0) / pairs)
    infected = np.sum(state.states == I)
    assert abs(infected - n * config.q0) < 4 * np.sqrt(n * config.q0 * (1 - config.q0))
    assert np.all(state.infection_times[state.states == I] == 0.0)


def test_run_invariants():
    res = simulate(small(), seed=3, snapshot_times=[0.0, 1.0, 5.0])
    tr = res.trajectory
    total = tr.p_S + tr.p_I + tr.p_R
    np.testing.assert_allclose(total, 1.0, atol=1e-12)
    assert np.all(np.diff(tr.p_S) <= 0)
    assert np.all(np.diff(tr.p_R) >= 0)
    assert np.all(tr.phi <= tr.p_I + 1e-12)
    res.final_state.check()
    c = tr.counters
    assert c["events"] == c["infection_attempts"] + c["recoveries"] + c["edge_redraws"]
    assert c["edge_flips"] <= c["edge_redraws"]
    assert c["infections"] <= c["infection_attempts"]


def test_recovered_pairs_are_frozen():
    config = small(n_vertices=80)
    res = simulate(config, seed=4, snapshot_times=[2.0, 5.0])
    a, b = res.snapshots
    # a pair whose endpoints both recovered by t=2 never changes afterwards
    rec = np.sort(a.order[a.states == R])
    assert rec.size > 5
    inv_a, inv_b = np.argsort(a.order), np.argsort(b.order)
    sub_a = a.adjacency[np.ix_(inv_a[rec], inv_a[rec])]
    sub_b = b.adjacency[np.ix_(inv_b[rec], inv_b[rec])]
    np.testing.assert_array_equal(sub_a, sub_b)


def test_determinism():
    config = small()
    r1 = simulate(config, replicate_seed(7, 2), [1.0])
    r2 = simulate(config, replicate_seed(7, 2), [1.0])
    np.testing.assert_array_equal(r1.trajectory.table(), r2.trajectory.table())
    np.testing.assert_array_equal(r1.snapshots[0].adjacency, r2.snapshots[0].adjacency)
    r3 = simulate(config, replicate_seed(7, 3), [1.0])
    assert not np.array_equal(r1.trajectory.p_I, r3.trajectory.p_I)


def test_ensemble_order_independent_of_workers():
    config = small(n_vertices=60, replicates=3)
    serial = run_ensemble(config, workers=1)
    parallel = run_ensemble(config, workers=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.trajectory.table(), b.trajectory.table())


def test_no_infection_without_transmission():
    config = small(lam=0.0)
    res = simulate(config, seed=1)
    tr = res.trajectory
    assert tr.counters["infections"] == 0
    np.testing.assert_array_equal(tr.p_S, tr.p_S[0])


def test_event_budget():
    with pytest.raises(EventBudgetExceeded):
        simulate(small(event_budget=50), seed=0)


def test_snapshot_labels_sorted():
    config = small()
    res = simulate(config, seed=5, snapshot_times=[0.7])
    snap = res.snapshots[0]
    assert snap.labeled
    assert np.all(np.diff(snap.types) >= 0)
    assert sorted(snap.order) == list(range(config.n_vertices))
    np.testing.assert_array_equal(snap.adjacency, snap.adjacency.T)
    F = snapshot_type_distribution(snap, config.horizon)
    F.check()
    G = empirical_type_distribution(res.final_state)
    G.check()
    assert np.all(snap.types[snap.states == S] == -1.0)
    assert np.all(snap.types[snap.states == R] == config.horizon + 1)


def test_snapshot_time_outside_horizon():
    with pytest.raises(ConfigError):
        simulate(small(), seed=0, snapshot_times=[6.0])


def test_constant_kernel_keeps_density():
    config = constant_config(p0=0.2, lam=5.0, gamma=3.0, horizon=2.0, n_vertices=200,
                             sample_points=21)
    res = simulate(config, seed=11, snapshot_times=[1.0, 2.0])
    pairs = 200 * 199 / 2
    sd = np.sqrt(0.2 * 0.8 / pairs)
    for snap in res.snapshots:
        density = snap.adjacency.sum() / 2 / pairs
        assert abs(density - 0.2) < 4 * sd
    assert abs(res.trajectory.rho_SS[-1] - 0.2) < 0.02


def test_mimicking_process_tracks_limit():
    config = small(n_vertices=300, sample_points=51)
    sol = solve(config)
    res = simulate_mimicking(config, sol, seed=2)
    tr = res.trajectory
    gap = np.max(np.abs(tr.p_I - np.interp(tr.times, sol.times, sol.pI)))
    assert gap < 0.12


def test_mimicking_needs_long_enough_limit():
    config = small()
    sol = solve(config.with_(horizon=2.0))
    with pytest.raises(ConfigError):
        simulate_mimicking(config, sol, seed=0)
