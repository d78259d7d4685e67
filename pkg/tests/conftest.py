import numpy as np
import pytest

from coevsir.model import KernelSpec, ScenarioConfig, double_peak_scenario
from coevsir.solver import solve


def constant_config(p0=0.1, pi=None, lam=10.0, gamma=5.0, q0=0.05, horizon=5.0, **kw):
    pi = p0 if pi is None else pi
    kernel = KernelSpec(kind="constant", pi_ss=p0, pi_si=pi, pi_ii=pi)
    return ScenarioConfig(p0=p0, q0=q0, lam=lam, gamma=gamma, horizon=horizon,
                          kernel=kernel, **kw)


def table_config(p0=0.1, ages=(0.0,), values=(0.6,), lam=4.0, gamma=5.0, q0=0.1,
                 horizon=5.0, pi_ii=0.3, **kw):
    kernel = KernelSpec(kind="table", pi_ss=p0, si_ages=tuple(ages), si_values=tuple(values),
                        pi_ii=pi_ii)
    return ScenarioConfig(p0=p0, q0=q0, lam=lam, gamma=gamma, horizon=horizon,
                          kernel=kernel, **kw)


@pytest.fixture(scope="session")
def double_peak_config():
    return double_peak_scenario()


@pytest.fixture(scope="session")
def double_peak_solution(double_peak_config):
    return solve(double_peak_config)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
