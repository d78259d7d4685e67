"""Reproduction number, final size, peaks and the gamma dependence."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import find_peaks, lfilter

from .errors import ContractError, DomainError
from .model import KernelSet, ScenarioConfig
from .solver import LimitSolution, exp_weights, solve

PEAK_PROMINENCE = 1e-4


def _age_only(config: ScenarioConfig, kernels: KernelSet):
    """Check the no-global-feedback setting and return ``pi_si(u)``."""
    if kernels.global_feedback:
        raise ContractError("R0 formula requires a kernel without global feedback")
    try:
        pi_ss = float(kernels.pi_ss(None))
    except Exception as exc:
        raise ContractError("R0 formula requires pi_SS independent of the type law") from exc
    if abs(pi_ss - config.p0) > 1e-15:
        raise ContractError(f"R0 formula requires pi_SS == p0, got {pi_ss} vs {config.p0}")

    def pi_si(u):
        return np.broadcast_to(np.asarray(kernels.pi_si(u, None), dtype=float), np.shape(u))

    return pi_si


def link_probability(u: np.ndarray, p0: float, gamma: float, pi_si) -> np.ndarray:
    """Probability that an infected of age ``u`` is linked to a given susceptible,
    on a uniform age grid ``u`` starting at 0 (exact for piecewise-linear pi_si
    with breakpoints on the grid)."""
    h = u[1] - u[0]
    decay = math.exp(-gamma * h)
    w0, w1 = exp_weights(gamma, h)
    f = pi_si(u)
    drive = np.concatenate([[p0], w0 * f[:-1] + w1 * f[1:]])
    return lfilter([1.0], [1.0, -decay], drive)


def r0_quadrature(config: ScenarioConfig, kernels: Optional[KernelSet] = None,
                  rtol: float = 1e-8, max_halvings: int = 22) -> float:
    """Basic reproduction number by trapezoid quadrature with step halving."""
    kernels = kernels or KernelSet.from_spec(config.kernel, config.p0)
    pi_si = _age_only(config, kernels)
    lam = config.lam
    if lam == 0.0:
        return 0.0
    # integrand <= lam exp(-u); tail below 1e-10 past this point
    upper = max(25.0, math.log(lam / 1e-10))
    previous = None
    n = 64
    for _ in range(max_halvings):
        u = np.linspace(0.0, upper, n + 1)
        g = link_probability(u, config.p0, config.gamma, pi_si) * lam * kernels.infectivity(u) * np.exp(-u)
        value = float(trapezoid(g, u))
        if previous is not None and abs(value - previous) <= rtol * abs(value):
            # Richardson step removes the leading h^2 term
            return (4.0 * value - previous) / 3.0
        previous = value
        n *= 2
    raise DomainError(f"R0 quadrature did not reach relative tolerance {rtol}")


def r0_closed_form(lam: float, p0: float, gamma: float, C: float) -> float:
    return lam * (p0 + gamma * C) / (gamma + 1.0)


def monotonicity_constant(kernels: KernelSet, upper: float = 40.0, n: int = 400_000) -> float:
    """``int_0^inf exp(-v) pi_SI(v) dv`` for an age-only SI kernel."""
    v = np.linspace(0.0, upper, n + 1)
    f = np.exp(-v) * np.broadcast_to(np.asarray(kernels.pi_si(v, None), dtype=float), v.shape)
    return float(trapezoid(f, v))


def final_size(r0: float, q0: float, tol: float = 1e-12) -> float:
    """Root of ``p = (1 - q0) exp(-r0 (1 - p))`` on ``[0, 1 - q0]``."""
    if r0 < 0:
        raise DomainError(f"r0 must be >= 0, got {r0}")
    if not 0.0 < q0 < 1.0:
        raise DomainError(f"q0 must lie in (0, 1), got {q0}")

    def residual(p):
        return p - (1.0 - q0) * math.exp(-r0 * (1.0 - p))

    lo, hi = 0.0, 1.0 - q0
    # residual(lo) < 0 <= residual(hi)
    if residual(hi) <= tol:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = residual(mid)
        if abs(r) < tol:
            return mid
        if r < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-300:
            break
    return 0.5 * (lo + hi)


def classical_peak(r0: float) -> float:
    """Peak prevalence of the homogeneous-mixing SIR model started near zero."""
    if not r0 > 0:
        raise DomainError(f"r0 must be > 0, got {r0}")
    if r0 <= 1.0:
        return 0.0
    x = 1.0 / r0
    return 1.0 - x + x * math.log(x)


def detect_peaks(solution: LimitSolution, prominence: float = PEAK_PROMINENCE):
    """Interior local maxima and minima of ``pI`` as ``(time, height)`` pairs."""
    p = solution.pI
    t = solution.times
    pk, _ = find_peaks(p, prominence=prominence)
    dp, _ = find_peaks(-p, prominence=prominence)
    peaks = [(float(t[i]), float(p[i])) for i in pk]
    dips = [(float(t[i]), float(p[i])) for i in dp]
    return peaks, dips, float(p.max())


@dataclass
class EpidemicSummary:
    r0: Optional[float]
    final_size_pS_inf: Optional[float]
    peaks: List[Tuple[float, float]]
    dips: List[Tuple[float, float]]
    i_max: float
    classical_i_max: Optional[float]
    monotonicity_C: Optional[float]
    direction: Optional[int]

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(config: ScenarioConfig, solution: Optional[LimitSolution] = None,
              kernels: Optional[KernelSet] = None) -> EpidemicSummary:
    """Peaks for any kernel; R0, final size and C when there is no global feedback."""
    kernels = kernels or KernelSet.from_spec(config.kernel, config.p0)
    solution = solution or solve(config, kernels)
    peaks, dips, i_max = detect_peaks(solution)
    r0 = fs = cl = C = direction = None
    try:
        r0 = r0_quadrature(config, kernels)
    except ContractError:
        pass
    if r0 is not None:
        fs = final_size(r0, config.q0)
        cl = classical_peak(r0) if r0 > 0 else 0.0
        C = monotonicity_constant(kernels)
        direction = int(np.sign(round(C - config.p0, 12)))
    return EpidemicSummary(r0=r0, final_size_pS_inf=fs, peaks=peaks, dips=dips,
                           i_max=i_max, classical_i_max=cl, monotonicity_C=C,
                           direction=direction)


@dataclass
class SweepRow:
    gamma: float
    r0: float
    final_size: float
    i_max: float


@dataclass
class GammaSweep:
    rows: List[SweepRow]
    C: float
    p0: float
    directions: dict = field(default_factory=dict)
    strict: dict = field(default_factory=dict)

    def table(self) -> np.ndarray:
        return np.array([[r.gamma, r.r0, r.final_size, r.i_max] for r in self.rows])


def _direction(values: Sequence[float], tol: float = 1e-12) -> int:
    # ties are allowed (i_max equals q0 for every gamma too small to start a wave)
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    if np.all(np.abs(d) <= tol):
        return 0
    if np.all(d >= -tol):
        return 1
    if np.all(d <= tol):
        return -1
    return 2  # not monotone


def gamma_sweep(config: ScenarioConfig, gammas: Sequence[float]) -> GammaSweep:
    """R0, final size and peak height of the limit for each gamma.

    ``directions`` maps each column to +1 (non-decreasing), -1
    (non-increasing), 0 (constant) or 2 (not monotone) along the given gamma
    order; ``strict`` records whether every step changes the column.
    """
    kernels = KernelSet.from_spec(config.kernel, config.p0)
    _age_only(config, kernels)
    C = monotonicity_constant(kernels)
    rows = []
    for g in gammas:
        cfg = config.with_(gamma=float(g))
        r0 = r0_quadrature(cfg, kernels)
        _, _, i_max = detect_peaks(solve(cfg, kernels))
        rows.append(SweepRow(float(g), r0, final_size(r0, cfg.q0), i_max))
    directions = {name: _direction([getattr(r, name) for r in rows])
                  for name in ("r0", "final_size", "i_max")}
    strict = {name: bool(np.all(np.abs(np.diff([getattr(r, name) for r in rows])) > 1e-12))
              for name in ("r0", "final_size", "i_max")}
    return GammaSweep(rows=rows, C=C, p0=config.p0, directions=directions, strict=strict)
