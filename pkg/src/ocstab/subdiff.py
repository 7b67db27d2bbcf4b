"""Subdifferential and singular subdifferential of the optimal value function V(alpha, theta).

Given a solution (x, u) at w = (alpha, theta), the subdifferential is either
the single pair

    alpha* = g'(x(1)) + int L_x dt - int A'y dt,   theta* = -C'y + L_theta,

with y' + A'y = L_x, y(1) = -g'(x(1)), provided u* = B'y - L_u lies in the
normal cone N(u; U), or it is empty.  The singular subdifferential collects
pairs (int A'v dt, C'v) with v' = -A'v, v(0) = int A'v dt and -B'v in N(u; U).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NotOptimal
from .grid import GridFn, integral, lp_norm, pairing
from .ode import AdjointState, discrete_costate, solve_adjoint, solve_singular_system
from .problem import OcProblem, Parameter, check_A5, normal_cone_membership
from .solver import SolveOptions, candidate_u_star, solve

log = logging.getLogger(__name__)

SINGLETON = "Singleton"
EMPTY = "Empty"
ZERO_ONLY = "ZeroOnly"
SUBSPACE = "Subspace"


@dataclass(frozen=True, eq=False)
class SubdiffResult:
    status: str
    alpha_star: np.ndarray
    theta_star: GridFn
    u_star: GridFn
    adjoint: AdjointState
    cone_certificate: object
    assumptions_verified: bool
    c3: float
    residual: float
    tolerance: float
    borderline: bool = False
    warnings: tuple = ()

    @property
    def pair(self) -> tuple[np.ndarray, GridFn]:
        return self.alpha_star, self.theta_star

    def summary(self) -> dict:
        cert = self.cone_certificate
        return {
            "status": self.status,
            "alpha_star": [float(v) for v in self.alpha_star],
            "lambda": float(cert) if isinstance(cert, (int, float, np.floating)) else None,
            "theta_star_l2": lp_norm(self.theta_star, 2),
            "u_star_l2": lp_norm(self.u_star, 2),
            "cone_residual": self.residual,
            "membership_tolerance": self.tolerance,
            "assumptions_verified": self.assumptions_verified,
            "c3": self.c3,
            "borderline": self.borderline,
            "warnings": list(self.warnings),
        }


def _discretisation_gap(prob: OcProblem, w: Parameter, xbar, ubar, adj: AdjointState) -> float:
    """L2 gap between u* built from the trapezoidal costate and from the discrete one.

    The solver certifies optimality of the discrete problem, whose costate
    differs from the continuous-time costate by O(h^2); this gap is the part of
    the cone residual attributable to that difference.
    """
    mu = discrete_costate(prob, xbar, ubar, w.theta)
    B = prob.matrices.B
    diff = np.einsum("inm,in->im", B, adj.y.values - mu.values)
    return lp_norm(GridFn(prob.grid, diff), 2)


def compute_subdifferential(prob: OcProblem, w: Parameter, xbar, ubar: GridFn, tol: float = 1e-6,
                            optimality_residual: float = 0.0) -> SubdiffResult:
    """Assemble the unique candidate (alpha*, theta*) and test the cone condition.

    The membership tolerance is max(tol, 10 * optimality_residual) + gap, where
    gap is the discretisation gap of the costate.  A candidate whose cone
    residual exceeds ten times that tolerance is not a solution: NotOptimal.
    A residual between one and ten tolerances yields an Empty, borderline result.
    """
    prob.check_parameter(w)
    adj = solve_adjoint(prob, xbar, ubar, w.theta)
    ustar = candidate_u_star(prob, adj, xbar, ubar, w.theta)
    gap = _discretisation_gap(prob, w, xbar, ubar, adj)
    tol_member = max(tol, 10.0 * optimality_residual) + gap

    pre = normal_cone_membership(prob.control_set, ubar, ustar, 10.0 * tol_member)
    if not pre.member:
        raise NotOptimal(
            f"cone residual {pre.residual:.3e} exceeds 10x membership tolerance {tol_member:.1e}; "
            "the pair is not a certified solution"
        )
    mem = normal_cone_membership(prob.control_set, ubar, ustar, tol_member)

    Lx, _, Lth = prob.cost.running_grads(xbar.state.values, ubar.values, w.theta.values)
    g1 = prob.cost.terminal_grad(xbar.final())
    mats = prob.matrices
    Aty = np.einsum("inj,in->ij", mats.A, adj.y.values)
    alpha_star = g1 + integral(GridFn(prob.grid, Lx)) - integral(GridFn(prob.grid, Aty))
    theta_star = GridFn(prob.grid, Lth - np.einsum("ink,in->ik", mats.C, adj.y.values))

    a5 = check_A5(mats.C)
    warnings = []
    if not a5.holds:
        warnings.append("assumptions unverified: C(t)' is not uniformly injective on the grid")
    borderline = not mem.member
    if borderline:
        warnings.append(
            f"borderline: cone residual {mem.residual:.3e} within 10x of tolerance {tol_member:.1e}"
        )
        log.warning(warnings[-1])
    return SubdiffResult(
        status=SINGLETON if mem.member else EMPTY,
        alpha_star=alpha_star,
        theta_star=theta_star,
        u_star=ustar,
        adjoint=adj,
        cone_certificate=mem.certificate,
        assumptions_verified=a5.holds,
        c3=a5.c3,
        residual=mem.residual,
        tolerance=tol_member,
        borderline=borderline,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True, eq=False)
class SingularSubdiffResult:
    status: str
    basis: list = field(default_factory=list)
    sigma_min: float = 0.0
    kernel_dim: int = 0

    def summary(self) -> dict:
        return {
            "status": self.status,
            "kernel_dim": self.kernel_dim,
            "sigma_min_phi1": self.sigma_min,
            "basis_alpha_star": [[float(v) for v in a] for a, _ in self.basis],
        }


def compute_singular_subdifferential(prob: OcProblem, w: Parameter, ubar: GridFn, tol: float = 1e-6,
                                     K: np.ndarray | None = None) -> SingularSubdiffResult:
    """Non-zero elements of the singular subdifferential admitted by the cone condition.

    The zero pair always belongs and is left implicit.  ``K`` replaces
    int A' Phi dt for testing the non-trivial-kernel branch.
    """
    prob.check_parameter(w)
    system = solve_singular_system(prob, K)
    mats = prob.matrices
    admitted = []
    for b in system.kernel_basis:
        for sign in (1.0, -1.0):
            v0 = sign * b
            v = system.path(v0)
            ustar = GridFn(prob.grid, -np.einsum("inm,in->im", mats.B, v))
            if normal_cone_membership(prob.control_set, ubar, ustar, tol).member:
                alpha_star = system.K @ v0
                theta_star = GridFn(prob.grid, np.einsum("ink,in->ik", mats.C, v))
                admitted.append((alpha_star, theta_star))
                break
    status = SUBSPACE if admitted else ZERO_ONLY
    return SingularSubdiffResult(status, admitted, system.sigma_min, len(system.kernel_basis))


@dataclass(frozen=True)
class InequalityRow:
    value: float
    lower_bound: float
    slack: float
    tolerance: float

    @property
    def violated(self) -> bool:
        return self.slack < -self.tolerance


@dataclass(frozen=True)
class InequalityReport:
    base_value: float
    rows: tuple

    @property
    def violations(self) -> list:
        return [r for r in self.rows if r.violated]

    @property
    def ok(self) -> bool:
        return not self.violations


def subgradient_inequality_check(prob: OcProblem, wbar: Parameter, g_pair, trial_params, opts: SolveOptions | None = None,
                                 base_value: float | None = None, tol_cvx=None) -> InequalityReport:
    """Check V(w) - V(wbar) >= <alpha*, alpha - alphabar> + <theta*, theta - thetabar> on trial points.

    ``tol_cvx`` is a float or a callable of ||w - wbar||; the default is
    1e-6 + 1e-3 ||w - wbar||.
    """
    alpha_star, theta_star = g_pair
    if base_value is None:
        base_value = solve(prob, wbar, opts).value
    rows = []
    for w in trial_params:
        da = w.alpha - wbar.alpha
        dth = w.theta - wbar.theta
        dist = float(np.sqrt(da @ da + pairing(dth, dth)))
        if tol_cvx is None:
            tol = 1e-6 + 1e-3 * dist
        elif callable(tol_cvx):
            tol = tol_cvx(dist)
        else:
            tol = float(tol_cvx)
        value = solve(prob, w, opts).value
        bound = base_value + float(alpha_star @ da) + pairing(theta_star, dth)
        rows.append(InequalityRow(value, bound, value - bound, tol))
    return InequalityReport(base_value, tuple(rows))
