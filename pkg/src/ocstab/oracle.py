"""Closed-form ground truth for the energy-constrained double integrator, and value-function finite differences.

Double integrator: x1' = x2, x2' = u, g(x) = |x|^2, no running cost,
||u||_2 <= 1.  From alpha the origin is reachable with unit energy iff
12 a1^2 + 12 a1 a2 + 4 a2^2 <= 1, and then the cubic x1 below is optimal
with value zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutsideRegion
from .grid import GridFn, TimeGrid
from .problem import CostSpec, L2Ball, OcProblem, Parameter, SystemMatrices
from .solver import SolveOptions, solve

INTERIOR = "Interior"
BOUNDARY = "Boundary"
OUTSIDE = "Outside"
ELLIPSE_TOL = 1e-12

DI_A = np.array([[0.0, 1.0], [0.0, 0.0]])
DI_B = np.array([[0.0], [1.0]])
DI_C = np.eye(2)


def double_integrator(n_steps: int = 200, radius: float = 1.0) -> OcProblem:
    grid = TimeGrid(n_steps)
    return OcProblem(
        grid,
        SystemMatrices.constant(grid, DI_A, DI_B, DI_C),
        CostSpec.build(2, 1, 2, Q=np.eye(2)),
        L2Ball(radius),
    )


@dataclass(frozen=True)
class EllipseClass:
    kind: str
    quadratic_value: float


def ellipse_quadratic(alpha) -> float:
    a1, a2 = (float(v) for v in alpha)
    return 12 * a1 * a1 + 12 * a1 * a2 + 4 * a2 * a2 - 1


def ellipse_membership(alpha) -> EllipseClass:
    q = ellipse_quadratic(alpha)
    if abs(q) <= ELLIPSE_TOL:
        return EllipseClass(BOUNDARY, q)
    return EllipseClass(INTERIOR if q < 0 else OUTSIDE, q)


@dataclass(frozen=True, eq=False)
class AnalyticSolution:
    x1: GridFn
    x2: GridFn
    u: GridFn

    @property
    def state(self) -> GridFn:
        return GridFn(self.x1.grid, np.hstack([self.x1.values, self.x2.values]))


def analytic_coefficients(alpha) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Power-series coefficients (lowest degree first) of x1, x2 and u."""
    a1, a2 = (float(v) for v in alpha)
    x1 = np.array([a1, a2, -(3 * a1 + 2 * a2), 2 * a1 + a2])
    x2 = np.polynomial.polynomial.polyder(x1)
    u = np.polynomial.polynomial.polyder(x2)
    return x1, x2, u


def analytic_solution(alpha, grid: TimeGrid) -> AnalyticSolution:
    cls = ellipse_membership(alpha)
    if cls.kind == OUTSIDE:
        raise OutsideRegion(f"alpha={tuple(alpha)} lies outside the reachable ellipse (q={cls.quadratic_value:.3g})")
    t = grid.nodes
    c1, c2, cu = analytic_coefficients(alpha)
    pv = np.polynomial.polynomial.polyval
    return AnalyticSolution(GridFn(grid, pv(t, c1)), GridFn(grid, pv(t, c2)), GridFn(grid, pv(t, cu)))


def fd_value_gradient(prob: OcProblem, wbar: Parameter, h: float = 1e-3, opts: SolveOptions | None = None,
                      noise: float = 1e-6) -> np.ndarray:
    """Central differences of V in alpha, each value from a fresh solve.

    When the h and h/2 estimates disagree by more than ``noise`` the
    Richardson combination (4 g_{h/2} - g_h) / 3 is returned instead.
    """
    opts = opts or SolveOptions(tol_opt=1e-11)

    def central(step):
        grad = np.empty(prob.n)
        for i in range(prob.n):
            e = np.zeros(prob.n)
            e[i] = step
            vp = solve(prob, wbar.shifted(e), opts).value
            vm = solve(prob, wbar.shifted(-e), opts).value
            grad[i] = (vp - vm) / (2 * step)
        return grad

    g_h = central(h)
    g_half = central(h / 2)
    if np.max(np.abs(g_h - g_half)) > noise:
        return (4 * g_half - g_h) / 3
    return g_half
