"""Command line entry point: ``coevsir {solve,simulate,compare,analyze,graphon}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 resource cap (event budget) reached.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import io
from .analysis import gamma_sweep, summarize
from .config import config_digest, load_config
from .convergence import convergence_study
from .errors import (ConfigError, ContractError, DomainError, EventBudgetExceeded,
                     NumericalInstabilityError)
from .graphon import coarsen, empirical_graphon, limiting_graphon, write_csv, write_pgm
from .simulator import Trajectory, replicate_seed, run_ensemble
from .solver import solve

log = logging.getLogger("coevsir")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _tag(t):
    return f"{t:.6g}"


class Manifest:
    """Inventory of a run: every emitted file with its SHA-256 digest."""

    def __init__(self, out: Path, subcommand: str, config_path):
        self.out = out
        self.data = {"subcommand": subcommand, "config_sha256": config_digest(config_path),
                     "seeds": [], "files": {}, "metrics": {}}
        self.start = time.perf_counter()

    def add(self, path: Path):
        self.data["files"][path.name] = io.sha256(path)
        return path

    def write(self, **metrics):
        self.data["metrics"].update(metrics)
        self.data["metrics"]["wall_clock_s"] = round(time.perf_counter() - self.start, 3)
        io.write_json(self.out / "manifest.json", self.data)


def _prepare(args):
    config = load_config(args.config)
    changes = {}
    if getattr(args, "steps", None) is not None:
        changes["n_steps"] = args.steps
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "resolution", None) is not None:
        changes["graphon_resolution"] = args.resolution
    if getattr(args, "replicates", None) is not None:
        changes["replicates"] = args.replicates
    if changes:
        config = config.with_(**changes)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return config, out


def _check_times(times, horizon):
    for t in times:
        if not 0.0 <= t <= horizon:
            raise ConfigError(f"time {t} outside [0, {horizon}]")


def cmd_solve(args) -> int:
    config, out = _prepare(args)
    man = Manifest(out, "solve", args.config)
    sol = solve(config)
    man.add(io.write_table(out / "trajectory.csv", io.SOLVER_HEADER,
                           [sol.times, sol.pS, sol.pI, sol.pR, sol.phi, sol.J]))
    ages, masses = sol.cohorts(sol.n_steps)
    man.add(io.write_table(out / "cohorts.csv", io.COHORT_HEADER,
                           [sol.horizon - ages, masses]))
    man.add(io.write_json(out / "summary.json", summarize(config, sol).to_dict()))
    man.write(n_steps=config.n_steps)
    return EXIT_OK


def _trajectory_columns(tr: Trajectory):
    return [tr.times, tr.p_S, tr.p_I, tr.p_R, tr.phi, tr.rho_SS, tr.rho_SI, tr.rho_II,
            tr.rho_other]


def cmd_simulate(args) -> int:
    config, out = _prepare(args)
    snaps = args.snapshots or []
    _check_times(snaps, config.horizon)
    man = Manifest(out, "simulate", args.config)
    results = run_ensemble(config, config.replicates, snaps)
    events = 0
    stack = []
    for r, res in enumerate(results):
        man.data["seeds"].append({"replicate": r,
                                  "entropy": str(replicate_seed(config.base_seed, r).entropy),
                                  "spawn_key": [r]})
        tr = res.trajectory
        events += tr.counters["events"]
        stack.append(_trajectory_columns(tr)[1:])
        man.add(io.write_table(out / f"replicate_{r:04d}.csv", io.SIM_HEADER,
                               _trajectory_columns(tr)))
        for snap in res.snapshots:
            stem = f"snapshot_r{r:04d}_t{_tag(snap.time)}"
            man.add(io.write_edge_list(out / f"{stem}_edges.txt", snap.adjacency))
            man.add(io.write_vertex_table(out / f"{stem}_vertices.csv", snap))
            man.add(_pgm(out / f"{stem}_empirical.pgm", empirical_graphon(snap)))
    stack = np.array(stack)          # replicate x column x time
    names = io.SIM_HEADER.split(",")[1:]
    header = ",".join(["t"] + [f"mean_{c}" for c in names] + [f"sd_{c}" for c in names])
    with warnings.catch_warnings():
        # edge densities are undefined (nan) while a pair class is empty
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(stack, axis=0)
        sd = np.nanstd(stack, axis=0, ddof=1) if len(results) > 1 else np.zeros_like(mean)
    man.add(io.write_table(out / "ensemble.csv", header,
                           [results[0].trajectory.times, *mean, *sd]))
    man.write(events=int(events), replicates=config.replicates, n_vertices=config.n_vertices)
    return EXIT_OK


def _pgm(path, g):
    write_pgm(g, path)
    return Path(path)


def cmd_compare(args) -> int:
    config, out = _prepare(args)
    times = args.times or [0.69, 1.4, 1.71]
    _check_times(times, config.horizon)
    n_list = args.n_list or [config.n_vertices]
    man = Manifest(out, "compare", args.config)
    sol = solve(config)
    study = convergence_study(config, sol, n_list, config.replicates, times, coarse=args.coarse)
    rows = [(r.n, r.replicate, t, r.levy[i], r.graphon_l1[i], r.cut_lower[i], r.cut_upper[i])
            for r in study.rows for i, t in enumerate(times)]
    man.add(io.write_table(out / "distances.csv", "n,replicate,t,levy,graphon_l1,cut_lower,cut_upper",
                           np.array(rows).T))
    man.add(io.write_table(out / "sup_pI.csv", "n,replicate,sup_abs_pI",
                           np.array([(r.n, r.replicate, r.sup_pI) for r in study.rows]).T))
    lm, ls = study.mean_sd("levy")
    gm, gs = study.mean_sd("graphon_l1")
    trend = [(n, t, lm[a, b], ls[a, b], gm[a, b], gs[a, b])
             for a, n in enumerate(n_list) for b, t in enumerate(times)]
    man.add(io.write_table(out / "trend.csv", "n,t,levy_mean,levy_sd,graphon_l1_mean,graphon_l1_sd",
                           np.array(trend).T))
    checks = study.trend()
    if len(n_list) < 2:
        log.warning("a single n was given; trend checks skipped")
    man.add(io.write_json(out / "summary.json", {"n_list": n_list, "times": times,
                                                 "replicates": config.replicates,
                                                 "trend": checks}))
    for r in range(config.replicates):
        man.data["seeds"].append({"replicate": r, "spawn_key": [r],
                                  "entropy": str(replicate_seed(config.base_seed, r).entropy)})
    for t in times:
        man.add(_pgm(out / f"limit_t{_tag(t)}.pgm",
                     coarsen(limiting_graphon(sol, t, config.graphon_resolution), args.coarse)))
    man.write(events=int(sum(r.events for r in study.rows)))
    return EXIT_OK


def cmd_analyze(args) -> int:
    config, out = _prepare(args)
    man = Manifest(out, "analyze", args.config)
    summary = summarize(config)
    man.add(io.write_json(out / "summary.json", summary.to_dict()))
    if args.gammas:
        try:
            sweep = gamma_sweep(config, args.gammas)
        except ContractError as exc:
            raise ConfigError(f"--gammas needs a kernel without global feedback "
                              f"(pi_SS == p0, age-only pi_SI): {exc}") from None
        man.add(io.write_table(out / "gamma_sweep.csv", "gamma,r0,final_size,i_max",
                               sweep.table().T))
        man.add(io.write_json(out / "gamma_sweep.json",
                              {"C": sweep.C, "p0": sweep.p0, "directions": sweep.directions,
                               "strict": sweep.strict}))
    man.write()
    return EXIT_OK


def cmd_graphon(args) -> int:
    config, out = _prepare(args)
    times = args.times or [0.0]
    _check_times(times, config.horizon)
    man = Manifest(out, "graphon", args.config)
    sol = solve(config)
    for t in times:
        g = limiting_graphon(sol, t, config.graphon_resolution)
        path = out / f"limit_t{_tag(t)}.csv"
        write_csv(g, path)
        man.add(path)
        man.add(_pgm(out / f"limit_t{_tag(t)}.pgm", g))
    man.write(resolution=config.graphon_resolution)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coevsir", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(name, func, help):
        s = sub.add_parser(name, help=help)
        s.add_argument("config", help="INI scenario file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--steps", type=int, help="override [solver] n_steps")
        s.set_defaults(func=func)
        return s

    common("solve", cmd_solve, "solve the deterministic limit")
    s = common("simulate", cmd_simulate, "simulate finite-n replicates")
    s.add_argument("--replicates", type=int)
    s.add_argument("--snapshots", type=_floats, help="comma-separated snapshot times")
    s.add_argument("--seed", type=int, help="override [sim] base_seed")
    s = common("compare", cmd_compare, "distance of finite-n ensembles to the limit")
    s.add_argument("--n-list", type=_ints)
    s.add_argument("--replicates", type=int)
    s.add_argument("--times", type=_floats)
    s.add_argument("--seed", type=int)
    s.add_argument("--resolution", type=int, help="limit graphon resolution")
    s.add_argument("--coarse", type=int, default=20, help="common coarse resolution")
    s = common("analyze", cmd_analyze, "R0, final size, peaks and a gamma sweep")
    s.add_argument("--gammas", type=_floats)
    s = common("graphon", cmd_graphon, "limit graphon files at given times")
    s.add_argument("--times", type=_floats)
    s.add_argument("--resolution", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalInstabilityError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EventBudgetExceeded as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
