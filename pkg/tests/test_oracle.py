from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ocstab.errors import OutsideRegion
from ocstab.grid import TimeGrid
from ocstab.ode import integrate_state
from ocstab.oracle import (
    analytic_coefficients,
    analytic_solution,
    double_integrator,
    ellipse_membership,
    ellipse_quadratic,
    fd_value_gradient,
)
from ocstab.problem import CostSpec, L2Ball, OcProblem, Parameter, SystemMatrices


def exact_control_energy(alpha):
    """Integral over [0, 1] of u(t)^2 for u = c0 + c1 t, from the antiderivative."""
    _, _, (c0, c1) = analytic_coefficients(alpha)
    return c0 * c0 + c0 * c1 + c1 * c1 / 3


def test_ellipse_examples():
    assert ellipse_membership([0.2, 0.0]).kind == "Interior"
    assert ellipse_membership([0.2, 0.0]).quadratic_value == pytest.approx(12 / 25 - 1)
    assert ellipse_membership([0.0, 0.5]).kind == "Boundary"
    assert ellipse_membership([1.0, 0.0]).kind == "Outside"
    assert ellipse_membership([1.0, 0.0]).quadratic_value == 11


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_classification_follows_sign(a1, a2):
    cls = ellipse_membership([a1, a2])
    q = ellipse_quadratic([a1, a2])
    assert cls.kind == ("Boundary" if abs(q) <= 1e-12 else "Interior" if q < 0 else "Outside")


def test_analytic_solution_examples():
    g = TimeGrid(50)
    t = g.nodes
    sol = analytic_solution([0.2, 0.0], g)
    np.testing.assert_allclose(sol.x1.values[:, 0], 0.4 * t**3 - 0.6 * t**2 + 0.2, atol=1e-15)
    np.testing.assert_allclose(sol.u.values[:, 0], 2.4 * t - 1.2, atol=1e-14)
    np.testing.assert_allclose(analytic_solution([0.0, 0.5], g).u.values[:, 0], 3 * t - 2, atol=1e-14)
    zero = analytic_solution([0.0, 0.0], g)
    assert np.all(zero.state.values == 0) and np.all(zero.u.values == 0)
    with pytest.raises(OutsideRegion):
        analytic_solution([1.0, 0.0], g)


@given(st.floats(-0.6, 0.6), st.floats(-1.0, 1.0))
def test_analytic_endpoint_conditions(a1, a2):
    x1, x2, _ = analytic_coefficients([a1, a2])
    assert x1[0] == a1 and x2[0] == a2
    assert abs(np.polynomial.polynomial.polyval(1.0, x1)) <= 1e-14
    assert abs(np.polynomial.polynomial.polyval(1.0, x2)) <= 1e-14


def test_ellipse_identity_with_rational_arithmetic():
    # with exact rationals the control energy equals the quadratic form plus one identically
    for a1, a2 in [(Fraction(1, 5), Fraction(0)), (Fraction(0), Fraction(1, 2)), (Fraction(-3, 7), Fraction(5, 11))]:
        c0, c1 = -(6 * a1 + 4 * a2), 12 * a1 + 6 * a2
        assert c0 * c0 + c0 * c1 + c1 * c1 / 3 == 12 * a1 * a1 + 12 * a1 * a2 + 4 * a2 * a2


@settings(max_examples=50)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_ellipse_identity_floats(a1, a2):
    assert abs(exact_control_energy([a1, a2]) - (ellipse_quadratic([a1, a2]) + 1)) <= 1e-10


def test_boundary_iff_unit_energy():
    for angle in np.linspace(0, 2 * np.pi, 13):
        L = np.linalg.cholesky(np.array([[12.0, 6.0], [6.0, 4.0]]))
        alpha = np.linalg.solve(L.T, [np.cos(angle), np.sin(angle)])
        assert abs(exact_control_energy(alpha) - 1) <= 1e-8
        assert ellipse_membership(alpha).kind == "Boundary"
    assert abs(exact_control_energy([0.2, 0.0]) - 1) > 1e-8


def test_analytic_control_reproduces_state():
    prob = double_integrator(200)
    sol = analytic_solution([0.1, 0.3], prob.grid)
    x = integrate_state(prob, sol.u, Parameter.zero_theta([0.1, 0.3], prob.grid, 2))
    assert np.max(np.abs(x.state.values - sol.state.values)) <= 10 * prob.grid.h**2


def frozen(n_steps=20):
    g = TimeGrid(n_steps)
    return OcProblem(g, SystemMatrices.constant(g, np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((2, 2))),
                     CostSpec.build(2, 1, 2, Q=np.eye(2)), L2Ball(1.0))


def test_fd_gradient_examples():
    prob = double_integrator(100)
    g = fd_value_gradient(prob, Parameter.zero_theta([0.2, 0.0], prob.grid, 2))
    assert np.max(np.abs(g)) <= 1e-4
    fz = frozen()
    np.testing.assert_allclose(fd_value_gradient(fz, Parameter.zero_theta([1.0, -2.0], fz.grid, 2)), [2.0, -4.0],
                               atol=1e-6)


@settings(max_examples=8)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_fd_gradient_monotone(a1, a2, b1, b2):
    prob = double_integrator(60)
    w1 = Parameter.zero_theta([a1, a2], prob.grid, 2)
    w2 = Parameter.zero_theta([b1, b2], prob.grid, 2)
    g1, g2 = fd_value_gradient(prob, w1), fd_value_gradient(prob, w2)
    assert (g1 - g2) @ (w1.alpha - w2.alpha) >= -1e-5
