"""Finite-n ensembles against the deterministic limit."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from .errors import ConfigError
from .graphon import coarsen, cut_norm_estimate, empirical_graphon, l1_distance, limiting_graphon
from .model import ScenarioConfig, levy_distance
from .simulator import replicate_seed, simulate, snapshot_type_distribution, worker_count
from .solver import LimitSolution


@dataclass
class ReplicateDistances:
    n: int
    replicate: int
    sup_pI: float
    events: int
    levy: np.ndarray        # one entry per snapshot time
    graphon_l1: np.ndarray
    cut_lower: np.ndarray
    cut_upper: np.ndarray


def _replicate(args):
    config, r, times, solution, limits, coarse = args
    res = simulate(config, replicate_seed(config.base_seed, r), times)
    tr = res.trajectory
    sup = float(np.max(np.abs(tr.p_I - np.interp(tr.times, solution.times, solution.pI))))
    k = len(times)
    levy, l1, lo, up = (np.empty(k) for _ in range(4))
    for i, snap in enumerate(res.snapshots):
        levy[i] = levy_distance(snapshot_type_distribution(snap, config.horizon),
                                solution.distribution_at(snap.time))
        emp = coarsen(empirical_graphon(snap), coarse)
        l1[i] = l1_distance(emp, limits[i])
        lo[i], up[i] = cut_norm_estimate(emp, limits[i])
    return ReplicateDistances(config.n_vertices, r, sup, tr.counters["events"],
                              levy, l1, lo, up)


@dataclass
class ConvergenceStudy:
    n_list: list
    times: list
    replicates: int
    rows: list

    def by_n(self, n):
        return [row for row in self.rows if row.n == n]

    def mean_sd(self, field: str):
        """Per-n ensemble mean and standard deviation of a distance column."""
        mean, sd = [], []
        for n in self.n_list:
            x = np.array([getattr(r, field) for r in self.by_n(n)], dtype=float)
            mean.append(x.mean(axis=0))
            sd.append(x.std(axis=0, ddof=1) if len(x) > 1 else np.zeros_like(x[0]))
        return np.array(mean), np.array(sd)

    def trend(self) -> Dict[str, bool]:
        """Monotonicity checks in n; ``*_2sigma`` allow an increase up to two
        standard errors of the difference of the ensemble means."""
        out = {}
        if len(self.n_list) < 2:
            return out
        m, _ = self.mean_sd("sup_pI")
        out["sup_pI_strictly_decreasing"] = bool(np.all(np.diff(m) < 0))
        for field in ("levy", "graphon_l1"):
            m, sd = self.mean_sd(field)
            se = sd / math.sqrt(self.replicates)
            slack = 2.0 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
            out[f"{field}_nonincreasing_2sigma"] = bool(np.all(np.diff(m, axis=0) <= slack))
        return out


def convergence_study(config: ScenarioConfig, solution: LimitSolution, n_list: Sequence[int],
                      replicates: int, times: Sequence[float], coarse: int = 20,
                      workers=None) -> ConvergenceStudy:
    """Simulate ``replicates`` runs per ``n`` and measure their distance to the limit:
    sup-norm of the infected share, Lévy distance of the type law, and L1 and
    cut-norm bounds between graphons coarsened to ``coarse`` cells."""
    for n in n_list:
        if n % coarse:
            raise ConfigError(f"n={n} is not a multiple of the coarse resolution {coarse}")
    r_lim = config.graphon_resolution
    if r_lim % coarse:
        raise ConfigError(f"graphon_resolution={r_lim} is not a multiple of {coarse}")
    times = [float(t) for t in times]
    limits = [coarsen(limiting_graphon(solution, t, r_lim), coarse) for t in times]
    jobs = [(config.with_(n_vertices=int(n)), r, tuple(times), solution, limits, coarse)
            for n in n_list for r in range(replicates)]
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        rows = [_replicate(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replicate, jobs))
    return ConvergenceStudy(list(n_list), times, replicates, rows)
