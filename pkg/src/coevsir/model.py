"""Domain types shared by the simulator, the limit solver and the graphon layer.

Vertex types follow the usual encoding: ``-1`` for a susceptible vertex, the
infection age for an infected one and ``T + 1`` for a recovered one.  Type
distributions are kept as atoms (susceptible atom, infected ages, recovered
atom) which makes them exact for empirical counts and a first-order
discretisation for the limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DomainError

SUSCEPTIBLE = -1.0
KERNEL_KINDS = ("constant", "behavioral", "table")


def _check_prob(name, value, open_interval=False):
    if value is None:
        raise ConfigError(f"missing field '{name}'")
    value = float(value)
    if open_interval:
        if not 0.0 < value < 1.0:
            raise ConfigError(f"'{name}' must lie in (0, 1), got {value}")
    elif not 0.0 <= value <= 1.0:
        raise ConfigError(f"'{name}' must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class KernelSpec:
    """Tagged description of the edge resampling probabilities.

    ``constant``: fixed ``pi_ss``, ``pi_si``, ``pi_ii``.
    ``behavioral``: the threat-level driven mixture between a normal and a
    distancing level, controlled by the share of vertices infected within the
    last ``window_a`` time units.
    ``table``: ``pi_si`` given as a piecewise-linear function of infection age
    (``si_ages``/``si_values``), constant ``pi_ss`` (defaults to ``p0``) and
    ``pi_ii``.

    Any kind may carry a tabulated infectivity; the default is identically 1.
    """

    kind: str = "constant"
    pi_ss: Optional[float] = None
    pi_si: Optional[float] = None
    pi_ii: Optional[float] = None
    phi1: Optional[float] = None
    phi2: Optional[float] = None
    window_a: float = 1.0
    p_ss_norm: Optional[float] = None
    p_ss_dist: Optional[float] = None
    p_si_norm: Optional[float] = None
    p_si_dist: Optional[float] = None
    si_ages: Optional[tuple] = None
    si_values: Optional[tuple] = None
    infectivity_ages: Optional[tuple] = None
    infectivity_values: Optional[tuple] = None

    def validate(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind '{self.kind}' "
                              f"(expected one of {', '.join(KERNEL_KINDS)})")
        if not self.window_a > 0:
            raise ConfigError(f"'window_a' must be > 0, got {self.window_a}")
        if self.kind == "constant":
            for name in ("pi_ss", "pi_si", "pi_ii"):
                _check_prob(name, getattr(self, name))
        elif self.kind == "behavioral":
            for name in ("phi1", "phi2"):
                if getattr(self, name) is None:
                    raise ConfigError(f"missing field '{name}'")
            if not 0.0 < self.phi1 < self.phi2:
                raise ConfigError(f"behavioral thresholds need 0 < phi1 < phi2, "
                                  f"got phi1={self.phi1}, phi2={self.phi2}")
            for name in ("p_ss_norm", "p_ss_dist", "p_si_norm", "p_si_dist", "pi_ii"):
                _check_prob(name, getattr(self, name))
        else:
            if self.si_ages is None or self.si_values is None:
                raise ConfigError("table kernel needs 'si_ages' and 'si_values'")
            _check_table("si", self.si_ages, self.si_values, prob=True)
            _check_prob("pi_ii", self.pi_ii)
            if self.pi_ss is not None:
                _check_prob("pi_ss", self.pi_ss)
        if (self.infectivity_ages is None) != (self.infectivity_values is None):
            raise ConfigError("infectivity needs both 'infectivity_ages' and "
                              "'infectivity_values'")
        if self.infectivity_ages is not None:
            _check_table("infectivity", self.infectivity_ages,
                         self.infectivity_values, prob=True)


def _check_table(name, ages, values, prob):
    ages = np.asarray(ages, dtype=float)
    values = np.asarray(values, dtype=float)
    if ages.ndim != 1 or ages.shape != values.shape or ages.size == 0:
        raise ConfigError(f"'{name}' table: ages and values must be equal-length lists")
    if ages[0] < 0 or np.any(np.diff(ages) <= 0):
        raise ConfigError(f"'{name}' table: ages must be >= 0 and strictly increasing")
    if prob and (np.any(values < 0) or np.any(values > 1)):
        raise ConfigError(f"'{name}' table: values must lie in [0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    p0: float
    q0: float
    lam: float
    gamma: float
    horizon: float
    kernel: KernelSpec = field(default_factory=KernelSpec)
    n_steps: int = 1000
    graphon_resolution: int = 100
    n_vertices: int = 1000
    base_seed: int = 0
    replicates: int = 1
    sample_points: int = 500
    event_budget: int = 2 ** 31

    def __post_init__(self):
        self.validate()

    def validate(self):
        _check_prob("p0", self.p0, open_interval=True)
        _check_prob("q0", self.q0, open_interval=True)
        if not self.lam >= 0:
            raise ConfigError(f"'lambda' must be >= 0, got {self.lam}")
        if not self.gamma >= 0:
            raise ConfigError(f"'gamma' must be >= 0, got {self.gamma}")
        if not self.horizon > 0:
            raise ConfigError(f"'horizon_T' must be > 0, got {self.horizon}")
        for name in ("n_steps", "graphon_resolution", "n_vertices", "replicates",
                     "sample_points", "event_budget"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"'{name}' must be a positive integer, got {value}")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ConfigError("'base_seed' must be a 64-bit unsigned integer")
        if self.kernel.kind == "constant" and self.kernel.pi_ss is None:
            raise ConfigError("missing field 'pi_ss'")
        self.kernel.validate()

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def double_peak_scenario(**overrides) -> ScenarioConfig:
    """The behavioural-response scenario that produces two infection peaks."""
    kernel = KernelSpec(kind="behavioral", phi1=0.24, phi2=0.28, window_a=1.0,
                        p_ss_norm=0.9, p_ss_dist=0.3, p_si_norm=0.6,
                        p_si_dist=0.01, pi_ii=0.3)
    base = dict(p0=0.1, q0=0.05, lam=10.0, gamma=20.0, horizon=5.0, kernel=kernel)
    base.update(overrides)
    return ScenarioConfig(**base)


# ---------------------------------------------------------------------------
# Type distributions


class StepCDF(NamedTuple):
    """Right-continuous step CDF: value ``levels[i]`` on ``[xs[i], xs[i+1])``."""

    xs: np.ndarray
    levels: np.ndarray

    @classmethod
    def from_atoms(cls, positions, masses) -> "StepCDF":
        positions = np.asarray(positions, dtype=float)
        masses = np.asarray(masses, dtype=float)
        order = np.argsort(positions, kind="stable")
        xs, inverse = np.unique(positions[order], return_inverse=True)
        merged = np.zeros(xs.size)
        np.add.at(merged, inverse, masses[order])
        return cls(xs, np.cumsum(merged))

    def __call__(self, y):
        idx = np.searchsorted(self.xs, y, side="right") - 1
        return np.where(idx >= 0, self.levels[np.maximum(idx, 0)], 0.0)

    def check(self):
        xs, levels = np.asarray(self.xs), np.asarray(self.levels)
        if xs.ndim != 1 or xs.shape != levels.shape:
            raise ContractError("step CDF needs matching 1-d jump and level arrays")
        if np.any(np.diff(xs) <= 0):
            raise ContractError("step CDF jump locations must be strictly increasing")
        if levels.size and (levels[0] < 0 or np.any(np.diff(levels) < -1e-15)
                            or levels[-1] > 1 + 1e-12):
            raise ContractError("step CDF levels must be non-decreasing within [0, 1]")


@dataclass(frozen=True)
class TypeDistribution:
    """Distribution of vertex types at time ``t``.

    ``ages``/``masses`` hold the infected part: point masses at infection
    ages in ``[0, t]``.  Mass created at age 0 sits at ``0+``, so that
    ``cdf(0) == p_S`` exactly.
    """

    t: float
    horizon: float
    p_S: float
    ages: np.ndarray
    masses: np.ndarray
    p_R: float

    def __post_init__(self):
        ages = np.asarray(self.ages, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        order = np.argsort(ages, kind="stable")
        object.__setattr__(self, "ages", ages[order])
        object.__setattr__(self, "masses", masses[order])

    @property
    def p_I(self) -> float:
        return float(self.masses.sum())

    @property
    def recovered_type(self) -> float:
        return self.horizon + 1.0

    def check(self, tol=1e-12):
        if self.p_S < -tol or self.p_R < -tol or np.any(self.masses < -tol):
            raise ContractError("type distribution has negative mass")
        total = self.p_S + self.p_I + self.p_R
        if abs(total - 1.0) > tol:
            raise ContractError(f"type distribution has total mass {total!r}")
        if self.ages.size and (self.ages[0] < 0 or self.ages[-1] > self.t + 1e-9):
            raise ContractError("infection ages must lie in [0, t]")

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        infected = cum[np.searchsorted(self.ages, y, side="right")]
        out = np.where(y >= -1.0, self.p_S, 0.0)
        out = out + np.where(y > 0.0, infected, 0.0)
        out = out + np.where(y >= self.recovered_type, self.p_R, 0.0)
        return out if out.ndim else float(out)

    def phi(self, a):
        return phi_window(self, a)

    def view(self) -> "DistributionView":
        return DistributionView(self)

    def step_cdf(self) -> StepCDF:
        positions = np.concatenate([[-1.0], self.ages, [self.recovered_type]])
        masses = np.concatenate([[self.p_S], self.masses, [self.p_R]])
        keep = masses > 0
        return StepCDF.from_atoms(positions[keep], masses[keep])


class DistributionView:
    """Read-only query surface handed to kernels."""

    __slots__ = ("_dist",)

    def __init__(self, dist: TypeDistribution):
        self._dist = dist

    @property
    def t(self):
        return self._dist.t

    @property
    def masses(self):
        return self._dist.p_S, self._dist.p_I, self._dist.p_R

    def cdf(self, y):
        return self._dist.cdf(y)

    def phi(self, a):
        return phi_window(self._dist, a)


def phi_window(dist: TypeDistribution, a: float) -> float:
    """Mass of infected vertices whose infection age lies in ``(0, a]``."""
    if not a > 0:
        raise DomainError(f"window length must be > 0, got {a}")
    return float(dist.masses[dist.ages <= a].sum())


def generalized_inverse(dist, x):
    """``inf{u : F(u) > x}`` for a :class:`TypeDistribution` or :class:`StepCDF`."""
    x = np.asarray(x, dtype=float)
    if np.any(x >= 1.0) or np.any(x < 0.0):
        raise DomainError("generalized inverse needs levels in [0, 1)")
    step = dist.step_cdf() if isinstance(dist, TypeDistribution) else dist
    idx = np.searchsorted(step.levels, x, side="right")
    idx = np.minimum(idx, step.xs.size - 1)
    out = step.xs[idx]
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Kernels


def behavioral_control(phi, phi1, phi2):
    """Distancing level: 0.1 below ``phi1``, 0.9 above ``phi2``, linear between."""
    if not 0.0 < phi1 < phi2:
        raise ConfigError(f"behavioral thresholds need 0 < phi1 < phi2, "
                          f"got phi1={phi1}, phi2={phi2}")
    ramp = np.clip((np.asarray(phi, dtype=float) - phi1) / (phi2 - phi1), 0.0, 1.0)
    out = 0.1 + 0.8 * ramp
    return out if out.ndim else float(out)


class KernelParams(NamedTuple):
    """Flat numeric form of a built-in kernel (consumed by the compiled simulator)."""

    behavioral: bool
    phi1: float
    phi2: float
    window_a: float
    ss_norm: float
    ss_dist: float
    si_ages: np.ndarray
    si_norm: np.ndarray
    si_dist: np.ndarray
    ii_norm: float
    ii_dist: float
    inf_ages: np.ndarray
    inf_values: np.ndarray


@dataclass(frozen=True)
class KernelSet:
    """Edge resampling probabilities plus infectivity.

    ``pi_ss(view)``, ``pi_si(u, view)`` and ``pi_ii(u, v, view)`` must
    broadcast over array-valued ages and over views whose fields are arrays
    (the solver evaluates them along whole time grids).
    """

    pi_ss: Callable
    pi_si: Callable
    pi_ii: Callable
    infectivity: Callable
    lipschitz_L: float
    window_a: float = 1.0
    global_feedback: bool = False
    params: Optional[KernelParams] = None

    @classmethod
    def from_spec(cls, spec: KernelSpec, p0: float,
                  density_bound: float = 1.0) -> "KernelSet":
        spec.validate()
        params = _kernel_params(spec, p0)
        return cls.from_params(params, density_bound=density_bound)

    @classmethod
    def from_params(cls, params: KernelParams, density_bound: float = 1.0):
        if params.behavioral:
            phi1, phi2, a = params.phi1, params.phi2, params.window_a

            def level(view):
                return behavioral_control(view.phi(a), phi1, phi2)
        else:
            def level(view):
                return 0.0

        def pi_ss(view):
            d = level(view)
            return (1.0 - d) * params.ss_norm + d * params.ss_dist

        def pi_si(u, view):
            d = level(view)
            u = np.asarray(u, dtype=float)
            return ((1.0 - d) * np.interp(u, params.si_ages, params.si_norm)
                    + d * np.interp(u, params.si_ages, params.si_dist))

        def pi_ii(u, v, view):
            d = level(view)
            pad = 0.0 * (np.asarray(u, dtype=float) + np.asarray(v, dtype=float))
            return (1.0 - d) * params.ii_norm + d * params.ii_dist + pad

        def infectivity(u):
            return np.interp(np.asarray(u, dtype=float), params.inf_ages, params.inf_values)

        return cls(pi_ss=pi_ss, pi_si=pi_si, pi_ii=pi_ii, infectivity=infectivity,
                   lipschitz_L=_declared_lipschitz(params, density_bound),
                   window_a=params.window_a, global_feedback=bool(params.behavioral),
                   params=params)

    @classmethod
    def constant(cls, pi_ss, pi_si, pi_ii, window_a=1.0):
        return cls.from_spec(KernelSpec(kind="constant", pi_ss=pi_ss, pi_si=pi_si,
                                        pi_ii=pi_ii, window_a=window_a), p0=pi_ss)


def _kernel_params(spec: KernelSpec, p0: float) -> KernelParams:
    one = np.array([0.0])
    if spec.infectivity_ages is None:
        inf_ages, inf_values = one, np.array([1.0])
    else:
        inf_ages = np.asarray(spec.infectivity_ages, dtype=float)
        inf_values = np.asarray(spec.infectivity_values, dtype=float)
    common = dict(window_a=float(spec.window_a), inf_ages=inf_ages, inf_values=inf_values)
    if spec.kind == "constant":
        return KernelParams(False, 0.0, 1.0, ss_norm=spec.pi_ss, ss_dist=spec.pi_ss,
                            si_ages=one, si_norm=np.array([spec.pi_si]),
                            si_dist=np.array([spec.pi_si]), ii_norm=spec.pi_ii,
                            ii_dist=spec.pi_ii, **common)
    if spec.kind == "behavioral":
        return KernelParams(True, float(spec.phi1), float(spec.phi2),
                            ss_norm=spec.p_ss_norm, ss_dist=spec.p_ss_dist, si_ages=one,
                            si_norm=np.array([spec.p_si_norm]),
                            si_dist=np.array([spec.p_si_dist]), ii_norm=spec.pi_ii,
                            ii_dist=spec.pi_ii, **common)
    pi_ss = p0 if spec.pi_ss is None else spec.pi_ss
    values = np.asarray(spec.si_values, dtype=float)
    return KernelParams(False, 0.0, 1.0, ss_norm=pi_ss, ss_dist=pi_ss,
                        si_ages=np.asarray(spec.si_ages, dtype=float), si_norm=values,
                        si_dist=values, ii_norm=spec.pi_ii, ii_dist=spec.pi_ii, **common)


def _declared_lipschitz(params: KernelParams, density_bound: float) -> float:
    # age slope of the SI tables
    slopes = [0.0]
    for table in (params.si_norm, params.si_dist):
        if params.si_ages.size > 1:
            slopes.append(np.max(np.abs(np.diff(table) / np.diff(params.si_ages))))
    L = max(slopes)
    if params.behavioral:
        # |d phi| <= 2 (1 + rho) d_L for laws with infected density <= rho
        gap = max(abs(params.ss_norm - params.ss_dist),
                  np.max(np.abs(params.si_norm - params.si_dist)),
                  abs(params.ii_norm - params.ii_dist))
        L += 0.8 / (params.phi2 - params.phi1) * gap * 2.0 * (1.0 + density_bound)
    return float(L)


def eval_kernel(kind: str, ages: Sequence[float], view, kernels: KernelSet):
    """Resampling acceptance probability for pair state ``kind`` in SS/SI/II."""
    if kind == "SS":
        return kernels.pi_ss(view)
    if kind == "SI":
        (u,) = ages
        if np.any(np.asarray(u) < 0):
            raise DomainError("infection ages must be >= 0")
        return kernels.pi_si(u, view)
    if kind == "II":
        u, v = ages
        if np.any(np.asarray(u) < 0) or np.any(np.asarray(v) < 0):
            raise DomainError("infection ages must be >= 0")
        return kernels.pi_ii(u, v, view)
    raise DomainError(f"unknown pair state '{kind}'")


def random_regular_distribution(rng, t, horizon, density_bound, n_cells=20):
    """Random type law whose infected part has a density bounded by ``density_bound``.

    The infected mass is spread over ``n_cells`` equal sub-intervals of
    ``[0, t)`` and returned as fine atoms (200 per cell).
    """
    width = t / n_cells
    density = rng.uniform(0, 1, n_cells) * min(density_bound, 1.0 / t)
    per_cell = 200
    ages = (np.arange(n_cells * per_cell) + 0.5) * (width / per_cell)
    masses = np.repeat(density * width / per_cell, per_cell)
    rest = 1.0 - masses.sum()
    split = rng.uniform()
    return TypeDistribution(t, horizon, rest * split, ages, masses, rest * (1 - split))


def check_lipschitz(kernels: KernelSet, rng=None, n_samples=500, t=3.0, horizon=5.0,
                    density_bound=1.0):
    """Sampled check of the declared Lipschitz constant.

    Draws random pairs of (age, age, type law) arguments, the laws having
    infected densities bounded by ``density_bound``, and returns the largest
    observed ratio ``|pi(x1) - pi(x2)| / (|du| + |dv| + d_L)`` over the
    three kernels.  The declared constant is respected iff the ratio does not
    exceed ``kernels.lipschitz_L``.
    """
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(n_samples):
        f1 = random_regular_distribution(rng, t, horizon, density_bound)
        if rng.uniform() < 0.5:
            # small perturbation of the infected masses
            masses = f1.masses * (1 + 0.05 * rng.uniform(-1, 1, f1.masses.size))
            p_R = 1.0 - f1.p_S - masses.sum()
            if p_R < 0:
                continue
            f2 = TypeDistribution(t, horizon, f1.p_S, f1.ages, masses, p_R)
        else:
            f2 = random_regular_distribution(rng, t, horizon, density_bound)
        u1, v1 = rng.uniform(0, t, 2)
        u2, v2 = np.clip([u1, v1] + rng.normal(0, 0.05, 2), 0, t)
        dist = abs(u1 - u2) + abs(v1 - v2) + levy_distance(f1.step_cdf(), f2.step_cdf())
        if dist == 0:
            continue
        w1, w2 = f1.view(), f2.view()
        gaps = (abs(kernels.pi_ss(w1) - kernels.pi_ss(w2)),
                abs(kernels.pi_si(u1, w1) - kernels.pi_si(u2, w2)),
                abs(kernels.pi_ii(u1, v1, w1) - kernels.pi_ii(u2, v2, w2)))
        worst = max(worst, float(max(np.max(g) for g in gaps)) / dist)
    return worst


# ---------------------------------------------------------------------------
# Metrics on distribution functions


def _as_step(F) -> StepCDF:
    if isinstance(F, TypeDistribution):
        return F.step_cdf()
    step = StepCDF(np.asarray(F[0], dtype=float), np.asarray(F[1], dtype=float))
    step.check()
    return step


def _piece_points(breaks):
    """One interior point per constant piece of a step function with these breaks."""
    b = np.unique(breaks)
    if b.size == 0:
        return np.array([0.0])
    mids = 0.5 * (b[:-1] + b[1:])
    return np.concatenate([[b[0] - 1.0], mids, [b[-1] + 1.0]])


def _levy_ok(F: StepCDF, G: StepCDF, eps: float) -> bool:
    # G(x) <= F(x + eps) + eps for all x
    x = _piece_points(np.concatenate([G.xs, F.xs - eps]))
    if np.any(G(x) > F(x + eps) + eps):
        return False
    # F(x - eps) - eps <= G(x) for all x
    x = _piece_points(np.concatenate([G.xs, F.xs + eps]))
    return not np.any(F(x - eps) - eps > G(x))


def levy_distance(F, G, max_candidates=4_000_000, tol=1e-12) -> float:
    """Lévy distance between two step CDFs (or type distributions).

    For step functions the infimum sits on the finite set of pairwise
    jump-location gaps and level gaps; the sandwich condition is constant
    between consecutive candidates, so a binary search over candidate
    intervals (probing their midpoints) returns it exactly.  Very large
    candidate sets fall back to bisection on ``eps``.
    """
    F, G = _as_step(F), _as_step(G)
    lf = np.concatenate([[0.0], F.levels])
    lg = np.concatenate([[0.0], G.levels])
    n_cand = F.xs.size * G.xs.size + lf.size * lg.size
    if n_cand <= max_candidates:
        cands = np.concatenate([np.abs(G.xs[:, None] - F.xs[None, :]).ravel(),
                                np.abs(lg[:, None] - lf[None, :]).ravel(), [0.0, 1.0]])
        cands = np.unique(cands[cands <= 1.0])
        # first interval (cands[i], cands[i+1]) on which the sandwich holds
        lo, hi = 0, cands.size - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _levy_ok(F, G, 0.5 * (cands[mid] + cands[mid + 1])):
                hi = mid
            else:
                lo = mid + 1
        return float(cands[lo])
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _levy_ok(F, G, mid):
            hi = mid
        else:
            lo = mid
    return hi


def kolmogorov_distance(F, G) -> float:
    F, G = _as_step(F), _as_step(G)
    x = np.concatenate([F.xs, G.xs])
    return float(np.max(np.abs(F(x) - G(x)))) if x.size else 0.0
