import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from impulse_solve.exact1d import (InvalidThreshold, NoBracket, density_mass, exact_density,
                                   exact_value, fp_weights, quintet_residuals, residual_hjb_1d,
                                   solve_quintet, solve_threshold, threshold_sides)
from impulse_solve.model import application_params, reduced_1d_params


@pytest.fixture(scope="module")
def sol():
    return solve_quintet(reduced_1d_params())


def test_reference_values(sol):
    assert sol.x_bar == pytest.approx(0.7986, abs=5e-5)
    assert sol.Phi0 == pytest.approx(4.253, abs=5e-4)
    assert sol.Phi_plus0 == pytest.approx(2.435, abs=5e-4)
    assert sol.Phi1 == pytest.approx(1.304, abs=5e-4)
    assert sol.q == pytest.approx(0.138, abs=5e-4)
    assert sol.r == pytest.approx(0.494, abs=5e-4)


def test_bisection_residual(sol):
    fl, fr = threshold_sides(sol.x_bar, sol.params)
    assert abs(fl - fr) < 1e-13


def test_endpoint_formulas(reduced):
    beta = reduced.lam / (reduced.delta + reduced.lam)
    fl, fr = threshold_sides(0.0, reduced)
    assert fl == pytest.approx((reduced.c + reduced.d) * math.exp(-beta) / -math.expm1(-beta))
    assert fr == pytest.approx(1 / (reduced.delta + reduced.lam + reduced.Lambda))


def test_system_residuals(sol):
    assert np.max(np.abs(quintet_residuals(sol))) < 1e-10


def test_perturbed_lambda_solves_system():
    s = solve_quintet(reduced_1d_params(lam=0.10))
    assert 0 < s.x_bar < 1
    assert np.max(np.abs(quintet_residuals(s))) < 1e-10


def test_no_bracket():
    with pytest.raises(NoBracket):
        solve_threshold(reduced_1d_params(d=5.0))


def test_needs_uniform_law():
    with pytest.raises(ValueError):
        solve_threshold(application_params())


def test_value_anchors(sol):
    assert exact_value(0.0, sol) == sol.Phi0
    assert exact_value(1.0, sol) == pytest.approx(sol.Phi1, abs=1e-14)
    left = exact_value(sol.x_bar, sol, side="left")
    right = exact_value(sol.x_bar, sol, side="right")
    assert abs(left - right) < 1e-10
    assert exact_value(1e-14, sol) == pytest.approx(sol.Phi_plus0, abs=1e-10)
    assert sol.Phi_plus0 != sol.Phi0 and sol.Phi0 > sol.Phi_plus0


def test_value_bound(sol):
    x = np.linspace(0, 1, 2001)
    v = exact_value(x, sol)
    assert np.all(v >= 0) and np.all(v <= 1 / sol.params.delta)


def test_density_atoms_and_jump(sol):
    assert sol.q > 0 and sol.r > 0
    assert density_mass(sol) == pytest.approx(1.0, abs=1e-12)
    num = sol.q + sol.r + quad(lambda x: exact_density(x, sol), 0, 1, points=[sol.x_bar])[0]
    assert num == pytest.approx(1.0, abs=1e-10)
    pl = exact_density(sol.x_bar, sol)
    pr = sol.r * math.exp(1 - sol.x_bar)
    assert pl == pytest.approx(sol.alpha * sol.r * math.exp(1 - sol.x_bar), rel=1e-14)
    assert pl / pr == pytest.approx(sol.alpha, rel=1e-14)


def test_redundant_balance(sol):
    # observation outflow from the x = 0 atom equals the jump inflow into it
    p = sol.params
    inflow = p.lam * quad(lambda x: exact_density(x, sol) * (1 - x), 0, 1, points=[sol.x_bar])[0]
    assert p.Lambda * sol.q == pytest.approx(inflow, rel=1e-9)


def test_density_limits(reduced):
    q, r, _ = fp_weights(0.0, reduced)
    u = reduced.lam / reduced.Lambda
    assert r == pytest.approx(1 / (u + math.e)) and q == pytest.approx(r * u)
    with pytest.raises(InvalidThreshold):
        fp_weights(1.0, reduced)


@given(xb=st.floats(0.0, 0.999), u=st.floats(0.01, 50.0))
def test_q_over_r_is_positive(xb, u):
    # q / r = u + e^{1 - xb} - e^{1 - xb / (1 + u)}, positive on [0, 1)
    p = reduced_1d_params(lam=0.25 * u)
    q, r, _ = fp_weights(xb, p)
    F = u + math.exp(1 - xb) - math.exp(1 - xb / (1 + u))
    assert q / r == pytest.approx(F, rel=1e-9, abs=1e-12)
    assert F > 0


@given(delta=st.floats(0.05, 0.3), Lam=st.floats(0.1, 1.0), lam=st.floats(0.05, 0.5),
       c=st.floats(0.0, 0.4), d=st.floats(0.05, 0.4))
@settings(max_examples=60, deadline=None)
def test_random_instances(delta, Lam, lam, c, d):
    p = reduced_1d_params(delta=delta, Lambda=Lam, lam=lam, c=c, d=d)
    try:
        s = solve_quintet(p)
    except NoBracket:
        return
    assert np.max(np.abs(quintet_residuals(s))) < 1e-9
    assert density_mass(s) == pytest.approx(1.0, abs=1e-12)
    assert s.q > 0 and s.r > 0


def test_hjb_residual(sol):
    assert residual_hjb_1d(sol) < 1e-9


def test_hjb_residual_detects_perturbation(sol):
    bad = replace(sol, Phi0=sol.Phi0 + 0.01)
    assert residual_hjb_1d(bad, np.array([0.0])) >= sol.params.delta * 0.01
