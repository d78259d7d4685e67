"""Deterministic large-population limit of the co-evolving SIR graph.

The infected population is tracked as cohorts, one per time step of birth.
Recovery at rate 1 is applied analytically (a cohort born at step ``b`` has
mass ``m_b * exp(-(k - b) dt)`` at step ``k``), susceptibles are depleted with
an exponential integrator, and the probability that a susceptible is linked
to a cohort is carried along with an exponentially weighted recursion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, DomainError, NumericalInstabilityError
from .model import KernelSet, ScenarioConfig, TypeDistribution


def exp_weights(gamma: float, h):
    """Weights ``(w0, w1)`` with
    ``int_0^h gamma e^{-gamma (h - s)} f(s) ds = w0 f(0) + w1 f(h)``
    exactly for linear ``f``."""
    x = gamma * np.asarray(h, dtype=float)
    small = x < 1e-6
    xs = np.where(small, 1.0, x)
    em = np.exp(-xs)
    total = -np.expm1(-xs)
    w0 = (1.0 - em * (1.0 + xs)) / xs
    w1 = total - w0
    # series near x = 0
    w0 = np.where(small, x / 2 - x * x / 3, w0)
    w1 = np.where(small, x / 2 - x * x / 6, w1)
    if w0.ndim == 0:
        return float(w0), float(w1)
    return w0, w1


class _StepView:
    """View of the limit law at a grid step while the solve is in progress."""

    def __init__(self, t, p_S, ages, masses, p_R, horizon, window_a, phi_window):
        self.t = t
        self._p_S = p_S
        self._ages = ages
        self._masses = masses
        self._p_R = p_R
        self._horizon = horizon
        self._window = window_a
        self._phi_window = phi_window

    @property
    def masses(self):
        return self._p_S, float(self._masses.sum()), self._p_R

    def phi(self, a):
        if a == self._window:
            return self._phi_window
        return float(self._masses[self._ages <= a].sum())

    def cdf(self, y):
        return TypeDistribution(self.t, self._horizon, self._p_S, self._ages,
                                self._masses, self._p_R).cdf(y)


class PathView:
    """Vectorised view of the limit law at (possibly off-grid) times ``s``.

    Scalar fields are linearly interpolated between grid steps.
    """

    def __init__(self, solution: "LimitSolution", s):
        self._sol = solution
        self.t = np.asarray(s, dtype=float)
        grid = solution.times
        self._p_S = np.interp(self.t, grid, solution.pS)
        self._p_I = np.interp(self.t, grid, solution.pI)
        self._p_R = np.interp(self.t, grid, solution.pR)

    @property
    def masses(self):
        return self._p_S, self._p_I, self._p_R

    def phi(self, a):
        return np.interp(self.t, self._sol.times, self._sol.phi_for_window(a))

    def cdf(self, y):
        return self._sol.cdf(self.t, y)


@dataclass
class LimitSolution:
    config: ScenarioConfig
    kernels: KernelSet
    times: np.ndarray
    pS: np.ndarray
    pI: np.ndarray
    pR: np.ndarray
    J: np.ndarray
    phi: np.ndarray
    birth_mass: np.ndarray   # birth_mass[0] is the initial atom q0
    B: np.ndarray            # probability that an S-S pair is active
    pi_ss: np.ndarray        # pi_SS evaluated along the grid
    _phi_cache: dict = field(default_factory=dict, repr=False)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def step_index(self, t: float) -> Optional[int]:
        k = int(round(t / self.dt))
        if 0 <= k <= self.n_steps and abs(k * self.dt - t) <= 1e-9 * max(1.0, t):
            return k
        return None

    def cohorts(self, k: int):
        """Ages and masses of all cohorts alive at step ``k`` (oldest first)."""
        b = np.arange(k + 1)
        ages = (k - b) * self.dt
        masses = self.birth_mass[: k + 1] * np.exp(-ages)
        return ages, masses

    def phi_for_window(self, a: float) -> np.ndarray:
        if a == self.kernels.window_a:
            return self.phi
        if a not in self._phi_cache:
            self._phi_cache[a] = np.array(
                [self.distribution(k).phi(a) for k in range(self.n_steps + 1)])
        return self._phi_cache[a]

    def distribution(self, k: int) -> TypeDistribution:
        ages, masses = self.cohorts(k)
        return TypeDistribution(t=float(self.times[k]), horizon=self.config.horizon,
                                p_S=float(self.pS[k]), ages=ages, masses=masses,
                                p_R=float(self.pR[k]))

    def distribution_at(self, t: float) -> TypeDistribution:
        """Limit law at an arbitrary time; off-grid times advance the previous
        grid law (ageing, recovery) and add the new infections at age 0."""
        if not 0.0 <= t <= self.horizon + 1e-12:
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        k = self.step_index(t)
        if k is not None:
            return self.distribution(k)
        k = int(t // self.dt)
        tau = t - self.times[k]
        ages, masses = self.cohorts(k)
        p_S = float(np.interp(t, self.times, self.pS))
        ages = np.concatenate([ages + tau, [0.0]])
        masses = np.concatenate([masses * math.exp(-tau), [self.pS[k] - p_S]])
        p_R = 1.0 - p_S - masses.sum()
        return TypeDistribution(t, self.config.horizon, p_S, ages, masses, p_R)

    def view_at(self, s) -> PathView:
        return PathView(self, s)

    def cdf(self, t, y):
        """``F(t; y)``, linear in ``t`` between grid steps."""
        t = np.asarray(t, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), t.shape) if t.ndim else np.asarray(y, float)
        if t.ndim == 0:
            return _interp_cdf(self, float(t), y)
        out = np.empty(t.shape)
        for idx in np.ndindex(t.shape):
            out[idx] = _interp_cdf(self, float(t[idx]), y[idx])
        return out


def _interp_cdf(sol, t, y):
    pos = t / sol.dt
    k = min(int(math.floor(pos)), sol.n_steps)
    w = pos - k
    lo = sol.distribution(k).cdf(y)
    if w <= 1e-12 or k == sol.n_steps:
        return lo
    return (1.0 - w) * lo + w * sol.distribution(k + 1).cdf(y)


def solve(config: ScenarioConfig, kernels: Optional[KernelSet] = None) -> LimitSolution:
    """March the cohort scheme on the uniform grid ``t_k = k T / n_steps``."""
    if config.n_steps < 10:
        raise ContractError(f"n_steps must be >= 10, got {config.n_steps}")
    kernels = kernels or KernelSet.from_spec(config.kernel, config.p0)
    N = config.n_steps
    dt = config.horizon / N
    times = np.arange(N + 1) * dt
    times[-1] = config.horizon
    lam, gamma, p0, a = config.lam, config.gamma, config.p0, kernels.window_a
    decay_g = math.exp(-gamma * dt)
    w0, w1 = exp_weights(gamma, dt)

    pS = np.zeros(N + 1)
    pI = np.zeros(N + 1)
    pR = np.zeros(N + 1)
    J = np.zeros(N + 1)
    phi = np.zeros(N + 1)
    B = np.zeros(N + 1)
    pi_ss = np.zeros(N + 1)
    birth = np.zeros(N + 1)
    link = np.zeros(N + 1)      # P(active link S - cohort b) at the current step
    prev_pi_si = np.zeros(N + 1)
    pS[0] = 1.0 - config.q0
    birth[0] = config.q0

    for k in range(N + 1):
        ages = (k - np.arange(k + 1)) * dt
        masses = birth[: k + 1] * np.exp(-ages)
        pI[k] = masses.sum()
        pR[k] = 1.0 - pS[k] - pI[k]
        phi[k] = masses[ages <= a + 1e-12 * dt].sum()
        view = _StepView(times[k], pS[k], ages, masses, pR[k], config.horizon, a, phi[k])

        pi_ss[k] = float(kernels.pi_ss(view))
        B[k] = p0 if k == 0 else decay_g * B[k - 1] + w0 * pi_ss[k - 1] + w1 * pi_ss[k]
        pi_si = np.broadcast_to(np.asarray(kernels.pi_si(ages, view), dtype=float), ages.shape)
        if k > 0:
            link[:k] = decay_g * link[:k] + w0 * prev_pi_si[:k] + w1 * pi_si[:k]
        link[k] = B[k]
        prev_pi_si[: k + 1] = pi_si
        J[k] = float(np.sum(masses * link[: k + 1] * kernels.infectivity(ages)))

        if not (np.isfinite(J[k]) and np.isfinite(pS[k]) and np.isfinite(pI[k])):
            raise NumericalInstabilityError(f"non-finite value at step {k}", step=k)
        if k < N:
            pS[k + 1] = pS[k] * math.exp(-lam * J[k] * dt)
            birth[k + 1] = pS[k] - pS[k + 1]

    return LimitSolution(config=config, kernels=kernels, times=times, pS=pS, pI=pI,
                         pR=pR, J=J, phi=phi, birth_mass=birth, B=B, pi_ss=pi_ss)


# ---------------------------------------------------------------------------
# Evaluation on a finished solution


def _classify(value, t, rec):
    if value == -1.0:
        return "S"
    if value == rec:
        return "R"
    if 0.0 <= value <= t + 1e-9:
        return "I"
    raise DomainError(f"type {value} outside {{-1}} U [0, {t}] U {{{rec}}}")


def eval_H(t: float, u: float, v: float, solution: LimitSolution,
           kernels: Optional[KernelSet] = None) -> float:
    """Probability that a pair with types ``u`` and ``v`` at time ``t`` is active.

    The pair's state path (S-S until the first infection, S-I until the
    second, I-I after) is read off the types; the exponentially weighted
    average of the resampling probabilities along it is integrated exactly
    for piecewise-linear integrands on the grid refined by the infection
    times.
    """
    kernels = kernels or solution.kernels
    cfg = solution.config
    rec = cfg.horizon + 1.0
    if not 0.0 <= t <= solution.horizon + 1e-9:
        raise DomainError(f"time {t} outside [0, {solution.horizon}]")
    ku, kv = _classify(u, t, rec), _classify(v, t, rec)
    if "R" in (ku, kv):
        return cfg.p0
    if t == 0.0:
        return cfg.p0
    ti = t - u if ku == "I" else np.inf
    tj = t - v if kv == "I" else np.inf
    first, second = min(ti, tj), max(ti, tj)

    grid = solution.times[solution.times < t]
    nodes = np.unique(np.concatenate([grid, [s for s in (first, second) if s < t], [t]]))
    left, right = nodes[:-1], nodes[1:]
    mid = 0.5 * (left + right)
    h = right - left
    f_left = _pi_along(left, mid, first, second, solution, kernels)
    f_right = _pi_along(right, mid, first, second, solution, kernels)
    w0, w1 = exp_weights(cfg.gamma, h)
    decay = np.exp(-cfg.gamma * (t - right))
    value = math.exp(-cfg.gamma * t) * cfg.p0 + float(np.sum(decay * (w0 * f_left + w1 * f_right)))
    return min(max(value, 0.0), 1.0)


def _pi_along(s, mid, first, second, solution, kernels):
    # the pair state on each segment is decided by its midpoint
    view = solution.view_at(s)
    out = np.empty(s.size)
    ss = mid < first
    si = (mid >= first) & (mid < second)
    ii = mid >= second
    if ss.any():
        out[ss] = _select(kernels.pi_ss(view), ss)
    if si.any():
        out[si] = _select(kernels.pi_si(np.maximum(s - first, 0.0), view), si)
    if ii.any():
        out[ii] = _select(kernels.pi_ii(np.maximum(s - first, 0.0),
                                        np.maximum(s - second, 0.0), view), ii)
    return out


def _select(values, mask):
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(int(mask.sum()), float(values))
    return np.broadcast_to(values, mask.shape)[mask]


def eval_J(solution: LimitSolution, k: int, kernels: Optional[KernelSet] = None) -> float:
    """Force of infection at grid step ``k`` recomputed through :func:`eval_H`."""
    kernels = kernels or solution.kernels
    t = float(solution.times[k])
    ages, masses = solution.cohorts(k)
    h = np.array([eval_H(t, -1.0, age, solution, kernels) for age in ages])
    return float(np.sum(masses * h * kernels.infectivity(ages)))


def eval_F(solution: LimitSolution, t: float, y) -> float:
    """Limit type CDF ``F(t; y)``."""
    if not 0.0 <= t <= solution.horizon + 1e-9:
        raise DomainError(f"time {t} outside [0, {solution.horizon}]")
    return solution.cdf(t, y)


def check_characteristics(solution: LimitSolution, stride: int = 1) -> dict:
    """Residuals of the discrete solution against the continuous equations.

    ``density``: cohort density ``m_b(k) / dt`` against the characteristic
    solution ``exp(-u) * lam * J(t - u) * pS(t - u)``;
    ``balance_I``: forward difference of ``pI`` against ``lam J pS - pI``;
    ``balance_R``: forward difference of ``pR`` against ``pI``.
    """
    sol = solution
    dt, lam = sol.dt, sol.config.lam
    k = np.arange(1, sol.n_steps + 1, stride)
    density = 0.0
    for kk in k:
        b = np.arange(1, kk + 1)
        u = (kk - b) * dt
        discrete = sol.birth_mass[b] * np.exp(-u) / dt
        exact = np.exp(-u) * lam * sol.J[b] * sol.pS[b]
        density = max(density, float(np.max(np.abs(discrete - exact))))
    dI = np.diff(sol.pI) / dt
    dR = np.diff(sol.pR) / dt
    balance_I = np.max(np.abs(dI - (lam * sol.J[:-1] * sol.pS[:-1] - sol.pI[:-1])))
    balance_R = np.max(np.abs(dR - sol.pI[:-1]))
    return {"density": density, "balance_I": float(balance_I),
            "balance_R": float(balance_R)}
