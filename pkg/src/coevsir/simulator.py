"""Exact stochastic simulation of the co-evolving SIR graph for finite n."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _engine
from .errors import ConfigError, ContractError, EventBudgetExceeded
from .model import KernelSet, ScenarioConfig, TypeDistribution

S, I, R = _engine.S, _engine.I, _engine.R
NEVER = np.inf  # infection time of a vertex that was never infected

COUNTER_NAMES = ("events", "infections", "recoveries", "edge_redraws",
                 "edge_flips", "infection_attempts")


def replicate_seed(base_seed: int, replicate: int) -> np.random.SeedSequence:
    """Independent stream for replicate ``replicate`` of ``base_seed``."""
    return np.random.SeedSequence(int(base_seed), spawn_key=(int(replicate),))


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def _child(seq: np.random.SeedSequence, k: int) -> np.random.SeedSequence:
    # stateless counterpart of seq.spawn(): child k is always the same stream
    return np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + (k,))


@dataclass
class GraphState:
    """Full simulator state at time ``clock``."""

    states: np.ndarray          # int8, S=0 / I=1 / R=2
    infection_times: np.ndarray  # float, NEVER if not infected yet
    adjacency: np.ndarray       # uint8, symmetric, zero diagonal
    clock: float
    horizon: float

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def counts(self):
        return tuple(int(np.sum(self.states == s)) for s in (S, I, R))

    @property
    def static_flags(self) -> np.ndarray:
        rec = self.states == R
        flags = rec[:, None] | rec[None, :]
        np.fill_diagonal(flags, False)
        return flags

    @property
    def infected_age_index(self) -> np.ndarray:
        """Currently infected vertices ordered by infection time (oldest last)."""
        infected = np.flatnonzero(self.states == I)
        return infected[np.argsort(-self.infection_times[infected], kind="stable")]

    def types(self) -> np.ndarray:
        y = np.full(self.n, -1.0)
        infected = self.states == I
        y[infected] = self.clock - self.infection_times[infected]
        y[self.states == R] = self.horizon + 1.0
        return y

    def check(self):
        A = self.adjacency
        if not np.array_equal(A, A.T) or np.any(np.diag(A)):
            raise ContractError("adjacency must be symmetric without self-loops")
        infected = self.states == I
        ages = self.clock - self.infection_times[infected]
        if np.any(ages < 0) or np.any(ages > self.clock + 1e-12):
            raise ContractError("infection ages must lie in [0, t]")


@dataclass
class Trajectory:
    times: np.ndarray
    p_S: np.ndarray
    p_I: np.ndarray
    p_R: np.ndarray
    phi: np.ndarray
    rho_SS: np.ndarray
    rho_SI: np.ndarray
    rho_II: np.ndarray
    rho_other: np.ndarray
    counters: dict = field(default_factory=dict)

    COLUMNS = ("t", "p_S", "p_I", "p_R", "phi", "rho_SS", "rho_SI", "rho_II", "rho_other")

    def table(self) -> np.ndarray:
        return np.column_stack([self.times, self.p_S, self.p_I, self.p_R, self.phi,
                                self.rho_SS, self.rho_SI, self.rho_II, self.rho_other])


@dataclass
class Snapshot:
    """Adjacency at ``time`` relabelled so that types are non-decreasing.

    ``order[k]`` is the original index of the vertex carrying label ``k``;
    ties in type are broken by original index.
    """

    time: float
    order: np.ndarray
    types: np.ndarray
    states: np.ndarray
    adjacency: np.ndarray
    labeled: bool = True


@dataclass
class SimulationResult:
    trajectory: Trajectory
    snapshots: list
    final_state: GraphState
    seed_entropy: int


def label_snapshot(time, states, infection_times, adjacency, horizon) -> Snapshot:
    state = GraphState(states, infection_times, adjacency, time, horizon)
    types = state.types()
    order = np.lexsort((np.arange(state.n), types))
    return Snapshot(time=float(time), order=order, types=types[order],
                    states=states[order], adjacency=adjacency[np.ix_(order, order)])


def init_state(config: ScenarioConfig, seed) -> GraphState:
    """Erdős–Rényi(p0) graph with iid initial infections of probability q0."""
    n = config.n_vertices
    if n < 2:
        raise ConfigError(f"simulation needs at least 2 vertices, got n_vertices={n}")
    rng = np.random.default_rng(_child(_seed_sequence(seed), 0))
    upper = np.triu(rng.random((n, n)) < config.p0, k=1)
    adjacency = (upper | upper.T).astype(np.uint8)
    infected = rng.random(n) < config.q0
    states = np.where(infected, I, S).astype(np.int8)
    infection_times = np.where(infected, 0.0, NEVER)
    return GraphState(states, infection_times, adjacency, 0.0, config.horizon)


def sample_grid(config: ScenarioConfig) -> np.ndarray:
    return np.linspace(0.0, config.horizon, config.sample_points)


def _run(config, kernels, seed, snapshot_times, mimic=None):
    params = kernels.params
    if params is None:
        raise ContractError("the simulator needs a built-in (parametric) kernel")
    seq = _seed_sequence(seed)
    state = init_state(config, seq)
    loop_seed = int(_child(seq, 1).generate_state(1, dtype=np.uint32)[0])
    snapshot_times = np.asarray(sorted(snapshot_times or ()), dtype=float)
    if snapshot_times.size and (snapshot_times[0] < 0 or snapshot_times[-1] > config.horizon):
        raise ConfigError("snapshot times must lie in [0, T]")
    if mimic is None:
        grid_t = grid_J = grid_phi = np.zeros(1)
    else:
        grid_t, grid_J, grid_phi = mimic
    sample_times = sample_grid(config)
    adj = state.adjacency.copy()
    states = state.states.copy()
    tinf = state.infection_times.copy()
    samples, snap_adj, snap_state, snap_tinf, counters, status, clock = _engine.run(
        adj, states, tinf, config.p0, config.lam, config.gamma, config.horizon,
        params.behavioral, params.phi1, params.phi2, params.window_a,
        params.ss_norm, params.ss_dist, params.si_ages, params.si_norm, params.si_dist,
        params.ii_norm, params.ii_dist, params.inf_ages, params.inf_values,
        mimic is not None, grid_t, grid_J, grid_phi,
        sample_times, snapshot_times, loop_seed, config.event_budget)
    if status == _engine.STATUS_BUDGET:
        raise EventBudgetExceeded(config.event_budget)
    if status == _engine.STATUS_BAD_ACCEPTANCE:
        raise ContractError("infection acceptance probability exceeded 1; "
                            "infectivity must take values in [0, 1]")

    n = config.n_vertices
    n_s, n_i, n_r = samples[:, 0], samples[:, 1], samples[:, 2]
    with np.errstate(invalid="ignore", divide="ignore"):
        pairs = np.column_stack([n_s * (n_s - 1) / 2, n_s * n_i, n_i * (n_i - 1) / 2,
                                 n * (n - 1) / 2 - n_s * (n_s - 1) / 2 - n_s * n_i
                                 - n_i * (n_i - 1) / 2])
        rho = samples[:, 4:8] / pairs
    traj = Trajectory(times=sample_times, p_S=n_s / n, p_I=n_i / n, p_R=n_r / n,
                      phi=samples[:, 3] / n, rho_SS=rho[:, 0], rho_SI=rho[:, 1],
                      rho_II=rho[:, 2], rho_other=rho[:, 3],
                      counters=dict(zip(COUNTER_NAMES, (int(c) for c in counters))))
    snaps = [label_snapshot(tt, snap_state[k], snap_tinf[k], snap_adj[k], config.horizon)
             for k, tt in enumerate(snapshot_times)]
    final = GraphState(states, tinf, adj, min(clock, config.horizon), config.horizon)
    return SimulationResult(traj, snaps, final, int(seq.entropy))


def simulate(config: ScenarioConfig, seed, snapshot_times: Sequence[float] = (),
             kernels: Optional[KernelSet] = None) -> SimulationResult:
    """Run the co-evolutionary process to the horizon.

    The trajectory is recorded on ``config.sample_points`` uniform times and
    labelled adjacency snapshots are taken at ``snapshot_times``.
    """
    kernels = kernels or KernelSet.from_spec(config.kernel, config.p0)
    return _run(config, kernels, seed, snapshot_times)


def simulate_mimicking(config: ScenarioConfig, limit, seed,
                       snapshot_times: Sequence[float] = (),
                       kernels: Optional[KernelSet] = None) -> SimulationResult:
    """Same edge dynamics, but susceptibles are infected at the deterministic
    rate ``lam * J(t)`` read from a solved limit, independently of the graph.
    Global feedback in the kernels reads the limiting threat level as well."""
    if limit.times[-1] < config.horizon - 1e-12:
        raise ConfigError(f"limit solved up to {limit.times[-1]}, "
                          f"shorter than the horizon {config.horizon}")
    if np.any(limit.J > 1.0 + 1e-12):
        raise ContractError("the force of infection must not exceed 1")
    kernels = kernels or KernelSet.from_spec(config.kernel, config.p0)
    return _run(config, kernels, seed, snapshot_times,
                mimic=(limit.times, np.minimum(limit.J, 1.0), limit.phi))


def empirical_type_distribution(state: GraphState) -> TypeDistribution:
    n = state.n
    infected = state.states == I
    ages = state.clock - state.infection_times[infected]
    counts = state.counts
    return TypeDistribution(t=state.clock, horizon=state.horizon, p_S=counts[0] / n,
                            ages=ages, masses=np.full(ages.size, 1.0 / n),
                            p_R=counts[2] / n)


def snapshot_type_distribution(snap: Snapshot, horizon: float) -> TypeDistribution:
    n = snap.types.size
    infected = snap.states == I
    return TypeDistribution(t=snap.time, horizon=horizon,
                            p_S=np.sum(snap.states == S) / n, ages=snap.types[infected],
                            masses=np.full(int(infected.sum()), 1.0 / n),
                            p_R=np.sum(snap.states == R) / n)


# ---------------------------------------------------------------------------
# Ensembles


def _replicate_job(args):
    config, replicate, snapshot_times = args
    return simulate(config, replicate_seed(config.base_seed, replicate), snapshot_times)


def worker_count(default: int = 1) -> int:
    value = os.environ.get("COEVSIR_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return default


def run_ensemble(config: ScenarioConfig, replicates: Optional[int] = None,
                 snapshot_times: Sequence[float] = (), workers: Optional[int] = None):
    """Simulate ``replicates`` independent runs, results ordered by replicate index."""
    replicates = config.replicates if replicates is None else replicates
    workers = worker_count() if workers is None else workers
    jobs = [(config, r, tuple(snapshot_times)) for r in range(replicates)]
    if workers <= 1 or replicates <= 1:
        return [_replicate_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate_job, jobs))


# ---------------------------------------------------------------------------
# Single-edge oracle


@dataclass
class OracleEstimate:
    estimate: float
    half_width: float
    samples: int


def edge_event_probability_oracle(t: float, u: float, v: float, config: ScenarioConfig,
                                  kernels: KernelSet, history, samples: int = 1_000_000,
                                  seed=0, chunk: int = 250_000) -> OracleEstimate:
    """Monte-Carlo probability that a pair with types ``u``, ``v`` at time ``t``
    is active, simulating only that pair's rate-gamma redraw clock against the
    endpoint state paths implied by the types.

    ``history(s)`` must return a (vectorised) distribution view at times ``s``;
    a solved limit provides one through ``LimitSolution.view_at``.  The edge
    value at ``t`` is the outcome of the last clock ring before ``t`` (or the
    initial Erdős–Rényi draw when none rang); earlier rings are overwritten.
    """
    T = config.horizon
    rec = T + 1.0
    rng = np.random.default_rng(seed)
    hits = 0
    if max(u, v) >= rec:
        # last event is the recovery redraw at probability p0
        for start in range(0, samples, chunk):
            k = min(chunk, samples - start)
            hits += int(np.sum(rng.random(k) < config.p0))
    else:
        # infection times of the endpoints (inf: never within [0, t])
        ti = t - u if u >= 0 else np.inf
        tj = t - v if v >= 0 else np.inf
        first, second = min(ti, tj), max(ti, tj)
        for start in range(0, samples, chunk):
            k = min(chunk, samples - start)
            back = rng.exponential(1.0 / config.gamma, k) if config.gamma > 0 else np.full(k, np.inf)
            rang = back <= t
            s = t - back[rang]
            prob = np.empty(s.size)
            view = history(s)
            ss = s < first
            si = (s >= first) & (s < second)
            ii = s >= second
            if ss.any():
                prob[ss] = _take(kernels.pi_ss(view), ss)
            if si.any():
                prob[si] = _take(kernels.pi_si(s - first, view), si)
            if ii.any():
                prob[ii] = _take(kernels.pi_ii(s - first, s - second, view), ii)
            draws = rng.random(k)
            active = np.empty(k, bool)
            active[rang] = draws[rang] < prob
            active[~rang] = draws[~rang] < config.p0
            hits += int(active.sum())
    p = hits / samples
    half = 1.959963984540054 * np.sqrt(max(p * (1 - p), 1.0 / samples) / samples)
    return OracleEstimate(p, float(half), samples)


def _take(values, mask):
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(int(mask.sum()), float(values))
    return values[mask]
