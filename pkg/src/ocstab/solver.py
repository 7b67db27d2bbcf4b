"""Projected-gradient solver for the discretised control problem, plus the optimality certificate."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence
from .grid import GridFn, Trajectory, lp_norm, pairing
from .ode import AdjointState, discrete_costate, integrate_state, solve_adjoint
from .problem import Box, ConeMembership, L2Ball, OcProblem, Parameter, eval_cost, normal_cone_membership

log = logging.getLogger(__name__)

INTERIOR = "Interior"
BOUNDARY = "Boundary"


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 5000
    step0: float = 1.0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    tol_opt: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.max_iters <= 0 or self.step0 <= 0 or self.armijo_c <= 0 or self.tol_opt <= 0:
            raise ValueError("solver options must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True, eq=False)
class SolveResult:
    xbar: Trajectory
    ubar: GridFn
    value: float
    iterations: int
    optimality_residual: float
    boundary_flag: str
    converged: bool
    history: tuple = ()

    def summary(self) -> dict:
        return {
            "value": self.value,
            "iterations": self.iterations,
            "optimality_residual": self.optimality_residual,
            "boundary_flag": self.boundary_flag,
            "converged": self.converged,
        }


def _objective(prob: OcProblem, u: GridFn, w: Parameter) -> tuple[float, Trajectory]:
    x = integrate_state(prob, u, w)
    return eval_cost(prob, x, u, w), x


def _gradient(prob: OcProblem, x: Trajectory, u: GridFn, w: Parameter) -> GridFn:
    y = discrete_costate(prob, x, u, w.theta)
    _, Lu, _ = prob.cost.running_grads(x.state.values, u.values, w.theta.values)
    return GridFn(prob.grid, Lu - np.einsum("inm,in->im", prob.matrices.B, y.values))


def reduced_gradient(prob: OcProblem, u: GridFn, w: Parameter) -> GridFn:
    """Gradient of u -> J(x(u), u, w) in the trapezoid-weighted L2 inner product.

    Equals L_u - B'y with y the nodal costate of the discretised problem, so it
    matches finite differences of the discrete cost to roundoff.
    """
    _, x = _objective(prob, u, w)
    return _gradient(prob, x, u, w)


def project(cs, u: GridFn) -> GridFn:
    return cs.project(u)


def boundary_flag(cs, u: GridFn) -> str:
    if isinstance(cs, L2Ball):
        return BOUNDARY if cs.on_boundary(u) else INTERIOR
    if isinstance(cs, Box):
        up, lo = cs.active_masks(u)
        return BOUNDARY if np.any(up | lo) else INTERIOR
    return INTERIOR


def _residual(cs, u: GridFn, g: GridFn) -> float:
    return lp_norm(u - cs.project(u - g), 2)


def solve(prob: OcProblem, w: Parameter, opts: SolveOptions | None = None, *, strict: bool = False,
          keep_history: bool = False) -> SolveResult:
    """Minimise the discrete cost over the control set by projected gradient.

    Armijo backtracking along the projection arc, with Barzilai-Borwein trial
    steps.  Starts from u = 0 and stops once ||u - P(u - grad J(u))||_2 falls
    to ``tol_opt``.  On hitting ``max_iters`` the last (lowest-cost) iterate is
    returned with ``converged=False``, or NonConvergence is raised if ``strict``.
    """
    opts = opts or SolveOptions()
    cs = prob.control_set
    u = cs.project(GridFn.zeros(prob.grid, prob.m))
    J, x = _objective(prob, u, w)
    g = _gradient(prob, x, u, w)
    res = _residual(cs, u, g)
    step = opts.step0
    history = [J] if keep_history else None
    it = 0
    u_prev = g_prev = None
    while res > opts.tol_opt and it < opts.max_iters:
        if u_prev is not None:
            du, dg = u - u_prev, g - g_prev
            curv = pairing(du, dg)
            step = pairing(du, du) / curv if curv > 0 else opts.step0
        slack = 1e-15 * (1.0 + abs(J))
        while True:
            u_new = cs.project(u - g * step)
            d = u_new - u
            J_new, x_new = _objective(prob, u_new, w)
            if J_new <= J + opts.armijo_c * pairing(g, d) + slack:
                break
            step *= opts.backtrack
            if step < 1e-20:
                break
        if J_new > J + slack:
            log.debug("line search stalled at iteration %d (J=%.3e)", it, J)
            break
        u_prev, g_prev = u, g
        u, x, J = u_new, x_new, J_new
        g = _gradient(prob, x, u, w)
        res = _residual(cs, u, g)
        it += 1
        if keep_history:
            history.append(J)

    converged = res <= opts.tol_opt
    result = SolveResult(
        xbar=x,
        ubar=u,
        value=eval_cost(prob, x, u, w),
        iterations=it,
        optimality_residual=res,
        boundary_flag=boundary_flag(cs, u),
        converged=converged,
        history=tuple(history) if keep_history else (),
    )
    if not converged:
        msg = f"projected gradient stopped after {it} iterations with residual {res:.3e} > {opts.tol_opt:.1e}"
        if strict:
            raise NonConvergence(msg, result)
        log.warning(msg)
    return result


@dataclass(frozen=True, eq=False)
class OptimalityCheck:
    ok: bool
    u_star: GridFn
    residual: float
    membership: ConeMembership
    adjoint: AdjointState


def candidate_u_star(prob: OcProblem, adj: AdjointState, xbar: Trajectory, ubar: GridFn, theta: GridFn) -> GridFn:
    """u*(t) = B(t)'y(t) - L_u(t, x, u, theta)."""
    _, Lu, _ = prob.cost.running_grads(xbar.state.values, ubar.values, theta.values)
    return GridFn(prob.grid, np.einsum("inm,in->im", prob.matrices.B, adj.y.values) - Lu)


def verify_optimality(prob: OcProblem, w: Parameter, xbar: Trajectory, ubar: GridFn, tol: float = 1e-6) -> OptimalityCheck:
    """Check u* = B'y - L_u lies in the normal cone of the control set at ubar."""
    adj = solve_adjoint(prob, xbar, ubar, w.theta)
    ustar = candidate_u_star(prob, adj, xbar, ubar, w.theta)
    mem = normal_cone_membership(prob.control_set, ubar, ustar, tol)
    return OptimalityCheck(mem.member, ustar, mem.residual, mem, adj)
