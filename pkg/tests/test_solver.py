import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from coevsir.errors import ContractError, DomainError
from coevsir.model import levy_distance
from coevsir.solver import (check_characteristics, eval_F, eval_H, eval_J, exp_weights, solve)

from conftest import constant_config, table_config


def test_no_transmission_is_exact():
    config = constant_config(lam=0.0, q0=0.2, n_steps=200)
    sol = solve(config)
    np.testing.assert_allclose(sol.pS, 0.8, atol=1e-15)
    np.testing.assert_allclose(sol.pI, 0.2 * np.exp(-sol.times), rtol=1e-12)
    np.testing.assert_allclose(sol.pR, 0.2 * -np.expm1(-sol.times), atol=1e-12)


def test_initial_values(double_peak_solution):
    sol = double_peak_solution
    q0 = sol.config.q0
    assert sol.pS[0] == pytest.approx(1 - q0)
    assert sol.pI[0] == pytest.approx(q0)
    assert sol.pR[0] == pytest.approx(0.0, abs=1e-15)
    assert sol.B[0] == pytest.approx(sol.config.p0)
    assert sol.phi[0] == pytest.approx(q0)
    assert eval_F(sol, 0.0, -1.0) == pytest.approx(1 - q0)
    assert eval_F(sol, 0.0, 0.0) == pytest.approx(1 - q0)
    assert eval_F(sol, 0.0, 1e-9) == pytest.approx(1.0)


def test_conservation_and_monotonicity(double_peak_solution):
    sol = double_peak_solution
    np.testing.assert_allclose(sol.pS + sol.pI + sol.pR, 1.0, atol=1e-6)
    assert np.all(np.diff(sol.pS) <= 1e-15)
    assert np.all(np.diff(sol.pR) >= -1e-15)
    assert np.all((sol.J >= 0) & (sol.J <= 1))
    assert np.all(sol.phi <= sol.pI + 1e-15)
    for k in (0, 137, 500, 1000):
        sol.distribution(k).check()


def test_force_of_infection_recomputed_through_H(double_peak_solution):
    sol = double_peak_solution
    for k in (1, 40, 137, 300):
        assert eval_J(sol, k) == pytest.approx(sol.J[k], rel=1e-9, abs=1e-14)


def test_H_trivial_branches(double_peak_solution):
    sol = double_peak_solution
    rec = sol.config.horizon + 1
    p0 = sol.config.p0
    assert eval_H(1.3, rec, 0.2, sol) == p0
    assert eval_H(1.3, -1.0, rec, sol) == p0
    assert eval_H(0.0, -1.0, -1.0, sol) == p0
    assert eval_H(0.0, -1.0, 0.0, sol) == p0
    assert 0 <= eval_H(1.3, -1.0, 0.2, sol) <= 1
    assert eval_H(1.3, 0.2, -1.0, sol) == pytest.approx(eval_H(1.3, -1.0, 0.2, sol))
    with pytest.raises(DomainError):
        eval_H(1.3, 2.0, -1.0, sol)
    with pytest.raises(DomainError):
        eval_H(6.0, -1.0, -1.0, sol)


def test_H_constant_kernel_is_p0():
    sol = solve(constant_config(p0=0.3, n_steps=100))
    for u, v in [(-1.0, -1.0), (-1.0, 0.7), (1.2, 0.4), (3.0, 2.99)]:
        assert eval_H(3.0, u, v, sol) == pytest.approx(0.3, abs=1e-12)


def test_H_without_edge_dynamics_is_p0():
    sol = solve(table_config(gamma=0.0, n_steps=100))
    for u, v in [(-1.0, -1.0), (-1.0, 0.7), (1.2, 0.4)]:
        assert eval_H(2.5, u, v, sol) == pytest.approx(0.1, abs=1e-15)


def _H_quad(t, v, p0, gamma, pi_si):
    """Independent quadrature for a susceptible linked to a vertex infected at t - v
    under an age-only kernel."""
    s0 = t - v
    ss = quad(lambda s: gamma * math.exp(-gamma * (t - s)) * p0, 0, s0)[0]
    si = quad(lambda s: gamma * math.exp(-gamma * (t - s)) * pi_si(s - s0), s0, t, limit=200,
              points=[s0 + 0.5, s0 + 1.0])[0]
    return math.exp(-gamma * t) * p0 + ss + si


def test_H_matches_quadrature_for_age_kernel():
    ages, values = (0.0, 0.5, 1.0), (0.6, 0.2, 0.4)
    config = table_config(ages=ages, values=values, gamma=3.0, n_steps=200)
    sol = solve(config)

    def pi_si(a):
        return float(np.interp(a, ages, values))

    # kinks of the table on grid nodes: the piecewise-linear rule is exact
    for t, v in [(2.0, 0.3), (2.0, 1.7), (4.9, 4.9), (1.25, 0.0)]:
        assert eval_H(t, -1.0, v, sol) == pytest.approx(_H_quad(t, v, 0.1, 3.0, pi_si),
                                                       abs=1e-10)
    # kinks between nodes: second-order interpolation error
    errors = []
    for n in (200, 400, 800):
        fine = solve(config.with_(n_steps=n))
        errors.append(abs(eval_H(3.33, -1.0, 0.8, fine) - _H_quad(3.33, 0.8, 0.1, 3.0, pi_si)))
    assert errors[0] < 2e-4
    assert errors[2] < errors[1] < errors[0] and errors[2] < errors[0] / 6
    # two infected endpoints: pi_II is constant 0.3 after the second infection
    t, u, v = 3.0, 2.0, 0.5
    s1, s2 = t - u, t - v
    g = 3.0
    ref = (math.exp(-g * t) * 0.1 + 0.1 * (math.exp(-g * (t - s1)) - math.exp(-g * t))
           + quad(lambda s: g * math.exp(-g * (t - s)) * pi_si(s - s1), s1, s2, points=[1.5, 2.0])[0]
           + 0.3 * (1 - math.exp(-g * (t - s2))))
    assert eval_H(t, u, v, sol) == pytest.approx(ref, abs=1e-10)


@given(st.floats(0, 50), st.floats(1e-4, 2.0), st.floats(-3, 3), st.floats(-3, 3))
def test_exp_weights_exact_for_linear(gamma, h, a, b):
    w0, w1 = exp_weights(gamma, h)
    f = lambda s: a + b * s  # noqa: E731
    ref = quad(lambda s: gamma * math.exp(-gamma * (h - s)) * f(s), 0, h, epsabs=1e-13)[0]
    assert w0 * f(0) + w1 * f(h) == pytest.approx(ref, abs=1e-9)
    assert w0 >= 0 and w1 >= 0
    assert w0 + w1 == pytest.approx(-math.expm1(-gamma * h), abs=1e-15)


def test_characteristics_residuals_are_first_order(double_peak_config):
    res = {}
    for n in (500, 1000, 2000):
        res[n] = check_characteristics(solve(double_peak_config.with_(n_steps=n)))
    for key in ("density", "balance_I", "balance_R"):
        r1 = res[1000][key] / res[500][key]
        r2 = res[2000][key] / res[1000][key]
        assert 0.4 < r1 < 0.6 and 0.4 < r2 < 0.6, (key, r1, r2)


def test_off_grid_distribution(double_peak_solution):
    sol = double_peak_solution
    t = 1.2345
    F = sol.distribution_at(t)
    F.check()
    assert F.p_S == pytest.approx(np.interp(t, sol.times, sol.pS))
    k = int(t // sol.dt)
    assert levy_distance(F, sol.distribution(k)) < 2 * sol.dt
    with pytest.raises(DomainError):
        sol.distribution_at(-0.1)


def test_cdf_is_monotone_in_type(double_peak_solution):
    sol = double_peak_solution
    y = np.concatenate([[-1.0], np.linspace(0, 1.7, 50), [6.0]])
    values = [eval_F(sol, 1.7, yy) for yy in y]
    assert np.all(np.diff(values) >= -1e-15)
    assert values[-1] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        eval_F(sol, 5.5, 0.0)


def test_too_few_steps():
    with pytest.raises(ContractError):
        solve(constant_config(n_steps=5))


def test_phi_window_for_other_widths(double_peak_solution):
    sol = double_peak_solution
    wide = sol.phi_for_window(10.0)
    np.testing.assert_allclose(wide, sol.pI, atol=1e-12)
    assert np.all(sol.phi_for_window(0.5) <= sol.phi + 1e-15)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.02, 0.5), st.floats(0.01, 0.3), st.floats(0, 30), st.floats(0, 20))
def test_solution_stays_a_probability_law(p0, q0, lam, gamma):
    sol = solve(constant_config(p0=p0, pi=0.5, q0=q0, lam=lam, gamma=gamma, n_steps=100))
    for arr in (sol.pS, sol.pI, sol.pR, sol.J):
        assert np.all((arr >= -1e-12) & (arr <= 1 + 1e-12))
    np.testing.assert_allclose(sol.pS + sol.pI + sol.pR, 1.0, atol=1e-12)
