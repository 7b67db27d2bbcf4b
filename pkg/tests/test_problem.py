import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_parameter, random_problem, smooth_fn, smooth_traj
from ocstab.errors import FeasibilityError
from ocstab.grid import GridFn, TimeGrid, Trajectory, pairing
from ocstab.oracle import double_integrator
from ocstab.problem import (
    Box,
    CostSpec,
    L2Ball,
    OcProblem,
    Parameter,
    SystemMatrices,
    Unconstrained,
    check_A5,
    cost_gradients,
    eval_cost,
    normal_cone_membership,
)


def frozen_at(grid, x1):
    return Trajectory.from_derivative(x1, GridFn.zeros(grid, len(x1)))


def test_cost_rejects_non_psd():
    with pytest.raises(ValueError, match="cost.Q"):
        CostSpec.build(2, 1, 1, Q=np.diag([1.0, -1.0]))
    with pytest.raises(ValueError, match="symmetric"):
        CostSpec.build(2, 1, 1, Q=[[1.0, 1.0], [0.0, 1.0]])
    CostSpec.build(2, 1, 1, Q=np.diag([1.0, -1e-13]))


def test_eval_cost_zero_data(rng):
    prob = random_problem(rng, 2, 1, 2)
    zero = OcProblem(prob.grid, prob.matrices, CostSpec.build(2, 1, 2), prob.control_set)
    assert eval_cost(zero, smooth_traj(rng, prob.grid, 2), smooth_fn(rng, prob.grid, 1), random_parameter(rng, prob)) == 0


def test_eval_cost_double_integrator_terminal():
    prob = double_integrator(20)
    w = Parameter.zero_theta([0.2, 0.0], prob.grid, 2)
    u = GridFn.zeros(prob.grid, 1)
    assert eval_cost(prob, frozen_at(prob.grid, [0.0, 0.0]), u, w) == 0
    assert eval_cost(prob, frozen_at(prob.grid, [1.0, 2.0]), u, w) == pytest.approx(5.0)


def test_cost_gradients_examples():
    prob = double_integrator(20)
    g = prob.grid
    cg = cost_gradients(prob, frozen_at(g, [0.0, 0.0]), GridFn.zeros(g, 1), GridFn.zeros(g, 2))
    assert np.all(cg.g_prime_at_1 == 0) and np.all(cg.Jx_vec == 0) and np.all(cg.Ju.values == 0)
    cg = cost_gradients(prob, frozen_at(g, [1.0, -1.0]), GridFn.zeros(g, 1), GridFn.zeros(g, 2))
    np.testing.assert_allclose(cg.g_prime_at_1, [2.0, -2.0])

    ru = OcProblem(g, prob.matrices, CostSpec.build(2, 1, 2, Ru=[[1.0]]), prob.control_set)
    u = GridFn.from_callable(g, lambda t: t)
    cg = cost_gradients(ru, frozen_at(g, [0.0, 0.0]), u, GridFn.zeros(g, 2))
    np.testing.assert_allclose(cg.Ju.values[:, 0], 2 * g.nodes)


def test_cost_gradients_jx_fn_tail_integral(rng):
    prob = random_problem(rng, 2, 2, 2)
    x = smooth_traj(rng, prob.grid, 2)
    cg = cost_gradients(prob, x, smooth_fn(rng, prob.grid, 2), smooth_fn(rng, prob.grid, 2))
    np.testing.assert_allclose(cg.Jx_fn.values[0], cg.Jx_vec, atol=1e-13)
    np.testing.assert_allclose(cg.Jx_fn.values[-1], cg.g_prime_at_1, atol=1e-13)


@given(st.integers(0, 2**32 - 1))
def test_cost_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng)
    g = prob.grid
    x, u, w = smooth_traj(rng, g, prob.n), smooth_fn(rng, g, prob.m), random_parameter(rng, prob)
    dx0, dxd = rng.normal(size=prob.n), GridFn(g, rng.normal(size=(g.n_nodes, prob.n)))
    du, dth = GridFn(g, rng.normal(size=(g.n_nodes, prob.m))), GridFn(g, rng.normal(size=(g.n_nodes, prob.k)))
    cg = cost_gradients(prob, x, u, w.theta)

    def J(s):
        xs = Trajectory.from_derivative(x.initial() + s * dx0, x.derivative + dxd * s)
        return eval_cost(prob, xs, u + du * s, Parameter(w.alpha, w.theta + dth * s))

    eps = 1e-5
    fd = (J(eps) - J(-eps)) / (2 * eps)
    # derivative in (x(0), x', u, theta) coordinates: Jx_fn pairs with x' via the trapezoid integral of the tail
    dstate = Trajectory.from_derivative(dx0, dxd).state
    analytic = (
        cg.g_prime_at_1 @ dstate.values[-1]
        + pairing(cg.Lx, dstate)
        + pairing(cg.Ju, du)
        + pairing(cg.Jtheta, dth)
    )
    assert abs(analytic - fd) <= 1e-6 * (1 + abs(fd))


def test_ball_membership_examples():
    g = TimeGrid(1000)
    ball = L2Ball(1.0)
    interior = GridFn.from_callable(g, lambda t: 2.4 * t - 1.2)
    mem = normal_cone_membership(ball, interior, GridFn.zeros(g, 1))
    assert mem.member and mem.branch == "interior" and mem.certificate == 0.0

    ub = GridFn.from_callable(g, lambda t: 3 * t - 2)
    ub = ub / np.sqrt(pairing(ub, ub))  # exactly on the discrete sphere
    mem = normal_cone_membership(ball, ub, ub * 2)
    assert mem.member and mem.certificate == pytest.approx(2.0)
    mem = normal_cone_membership(ball, ub, GridFn.constant(g, 1.0))
    assert not mem.member and mem.residual > 0.5


def test_ball_membership_rejects_infeasible():
    g = TimeGrid(10)
    with pytest.raises(FeasibilityError):
        normal_cone_membership(L2Ball(1.0), GridFn.constant(g, 2.0), GridFn.zeros(g, 1))


@given(st.integers(0, 2**32 - 1), st.floats(0, 100))
def test_ball_cone_is_a_cone(seed, s):
    rng = np.random.default_rng(seed)
    g = TimeGrid(30)
    ub = GridFn(g, rng.normal(size=(31, 2)))
    ub = ub / np.sqrt(pairing(ub, ub))
    ustar = ub * float(rng.uniform(0, 3))
    assert normal_cone_membership(L2Ball(1.0), ub, ustar, 1e-8).member
    assert normal_cone_membership(L2Ball(1.0), ub, ustar * s, 1e-8 * (1 + s)).member


@given(st.integers(0, 2**32 - 1), st.sampled_from(["unconstrained", "ball", "box"]))
def test_zero_is_in_every_normal_cone(seed, kind):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, control=kind, n_steps=20)
    u = prob.control_set.project(smooth_fn(rng, prob.grid, prob.m, 2.0))
    assert normal_cone_membership(prob.control_set, u, GridFn.zeros(prob.grid, prob.m)).member


def test_box_membership_nodewise():
    g = TimeGrid(4)
    box = Box(GridFn.constant(g, -1.0), GridFn.constant(g, 1.0))
    ub = GridFn(g, [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert normal_cone_membership(box, ub, GridFn(g, [-3.0, 0, 0, 0, 2.0])).member
    assert not normal_cone_membership(box, ub, GridFn(g, [3.0, 0, 0, 0, 2.0])).member
    mem = normal_cone_membership(box, ub, GridFn(g, [0.0, 0.1, 0, 0, 0]))
    assert not mem.member and mem.residual > 0
    with pytest.raises(FeasibilityError):
        normal_cone_membership(box, GridFn.constant(g, 2.0), GridFn.zeros(g, 1))


def test_box_requires_strict_bounds():
    g = TimeGrid(4)
    with pytest.raises(ValueError):
        Box(GridFn.constant(g, 1.0), GridFn.constant(g, 1.0))


def test_unconstrained_membership():
    g = TimeGrid(4)
    assert normal_cone_membership(Unconstrained(), GridFn.constant(g, 5.0), GridFn.zeros(g, 1)).member
    assert not normal_cone_membership(Unconstrained(), GridFn.zeros(g, 1), GridFn.constant(g, 1e-3)).member


def test_check_A5_examples():
    g = TimeGrid(10)
    a = check_A5(SystemMatrices.constant(g, np.zeros((2, 2)), np.zeros((2, 1)), np.eye(2)).C)
    assert a.holds and a.c3 == pytest.approx(1.0)
    a = check_A5(np.zeros((11, 2, 2)))
    assert not a.holds and a.c3 == 0
    diag = np.array([np.diag([1.0, t]) for t in g.nodes])
    a = check_A5(diag)
    assert not a.holds and a.c3 == 0


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_check_A5_orthogonal(seed, n):
    Q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(n, n)))
    assert abs(check_A5(Q).c3 - 1) <= 1e-12


def test_with_grid_requires_time_invariant_data(rng):
    prob = double_integrator(10)
    assert prob.with_grid(40).grid.n_steps == 40
    A = np.stack([np.eye(2) * t for t in prob.grid.nodes])
    tv = OcProblem(prob.grid, SystemMatrices(prob.grid, A, prob.matrices.B, prob.matrices.C), prob.cost, prob.control_set)
    with pytest.raises(ValueError):
        tv.with_grid(20)


def test_problem_dimension_checks():
    prob = double_integrator(10)
    with pytest.raises(ValueError):
        prob.check_parameter(Parameter.zero_theta([0.0, 0.0, 0.0], prob.grid, 2))
    with pytest.raises(ValueError):
        OcProblem(prob.grid, prob.matrices, CostSpec.build(3, 1, 2), prob.control_set)
