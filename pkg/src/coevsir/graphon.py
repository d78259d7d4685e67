"""Step-function graphons, their distances and file exports."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError
from .model import generalized_inverse
from .solver import LimitSolution, eval_H


@dataclass(frozen=True)
class Graphon:
    """Symmetric ``r x r`` step function on the unit square."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise ContractError(f"graphon values must be a square matrix, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    def check(self, tol: float = 0.0):
        v = self.values
        if np.any(v < -tol) or np.any(v > 1 + tol):
            raise ContractError("graphon values outside [0, 1]")
        if not np.allclose(v, v.T, atol=tol, rtol=0):
            raise ContractError("graphon is not symmetric")


def empirical_graphon(snapshot) -> Graphon:
    """Resolution-n graphon of a type-ordered adjacency snapshot."""
    if not getattr(snapshot, "labeled", False):
        raise ContractError("snapshot must be labelled in type order before building its graphon")
    adj = np.asarray(snapshot.adjacency, dtype=float)
    np.fill_diagonal(adj, 0.0)
    return Graphon(adj)


def limiting_graphon(solution: LimitSolution, t: float, resolution: int) -> Graphon:
    """Limit graphon at time ``t`` sampled at cell centres."""
    if resolution < 1:
        raise ContractError(f"resolution must be positive, got {resolution}")
    dist = solution.distribution_at(t)
    x = (np.arange(resolution) + 0.5) / resolution
    types = np.array([generalized_inverse(dist, xi) for xi in x])
    uniq, inv = np.unique(types, return_inverse=True)
    m = uniq.size
    table = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            table[i, j] = table[j, i] = eval_H(t, uniq[i], uniq[j], solution)
    return Graphon(table[np.ix_(inv, inv)])


def coarsen(g: Graphon, resolution: int) -> Graphon:
    r = g.resolution
    if resolution < 1 or r % resolution:
        raise DomainError(f"resolution {resolution} does not divide {r}")
    k = r // resolution
    v = g.values.reshape(resolution, k, resolution, k).mean(axis=(1, 3))
    return Graphon(0.5 * (v + v.T))


def refine(g: Graphon, resolution: int) -> Graphon:
    r = g.resolution
    if resolution % r:
        raise DomainError(f"{resolution} is not a multiple of {r}")
    k = resolution // r
    return Graphon(np.repeat(np.repeat(g.values, k, axis=0), k, axis=1))


def _common(g1: Graphon, g2: Graphon, max_resolution: int):
    if g1.resolution == g2.resolution:
        return g1.values, g2.values
    r = math.lcm(g1.resolution, g2.resolution)
    if r > max_resolution:
        raise DomainError(f"common refinement of {g1.resolution} and {g2.resolution} "
                          f"needs resolution {r} > {max_resolution}")
    return refine(g1, r).values, refine(g2, r).values


def l1_distance(g1: Graphon, g2: Graphon, max_resolution: int = 4000) -> float:
    a, b = _common(g1, g2, max_resolution)
    return float(np.mean(np.abs(a - b)))


def _best_response(D, T):
    # cells whose row sum over T is positive; empty set if none
    return (D @ T) > 0


def _climb(D, T, max_iter=1000):
    """Alternate best responses from column set ``T``; returns the value."""
    T = T.astype(float)
    value = -np.inf
    for _ in range(max_iter):
        S = _best_response(D, T).astype(float)
        T = _best_response(D.T, S).astype(float)
        new = float(S @ D @ T)
        if new <= value:
            break
        value = new
    return max(value, 0.0)


def cut_norm_estimate(g1: Graphon, g2: Graphon, starts: int = 32, seed: int = 0):
    """``(lower, upper)`` bounds on the cut distance of two graphons.

    The lower bound comes from multi-start alternating maximisation of
    ``|int_{S x T} (g1 - g2)|`` over unions of cells; when the number of
    cell subsets does not exceed the start budget every subset is used as a
    start, which makes the lower bound exact.  The upper bound is the L1
    distance.
    """
    if g1.resolution != g2.resolution:
        raise ContractError("cut_norm_estimate needs a common resolution")
    r = g1.resolution
    D = (g1.values - g2.values) / (r * r)
    budget = starts + 2
    if 2 ** r <= budget:
        init = [np.array([(m >> i) & 1 for i in range(r)], dtype=bool) for m in range(2 ** r)]
    else:
        rng = np.random.default_rng(seed)
        init = [np.ones(r, bool), np.arange(r) < (r + 1) // 2]
        init += [rng.random(r) < 0.5 for _ in range(starts)]
    lower = 0.0
    for sign in (1.0, -1.0):
        for T in init:
            lower = max(lower, _climb(sign * D, T))
    upper = l1_distance(g1, g2)
    return min(lower, upper), upper


def cut_norm_brute_force(g1: Graphon, g2: Graphon) -> float:
    """Exact cut distance by enumerating all pairs of cell subsets (small r only)."""
    r = g1.resolution
    if r > 12:
        raise DomainError(f"brute force is limited to resolution <= 12, got {r}")
    D = (g1.values - g2.values) / (r * r)
    masks = np.array([[(m >> i) & 1 for i in range(r)] for m in range(2 ** r)], dtype=float)
    sums = masks @ D @ masks.T
    return float(np.max(np.abs(sums)))


def write_csv(g: Graphon, path):
    np.savetxt(path, g.values, fmt="%.9g", delimiter=",")


def write_pgm(g: Graphon, path):
    """Binary greyscale image; dense cells render dark."""
    pixels = np.rint(255.0 * (1.0 - np.clip(g.values, 0.0, 1.0))).astype(np.uint8)
    r = g.resolution
    with open(path, "wb") as fh:
        fh.write(f"P5\n{r} {r}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ContractError(f"{path} is not a binary PGM file")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
