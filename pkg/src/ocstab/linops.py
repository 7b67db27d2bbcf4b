"""Discrete constraint operators M(x, u) = Ax + Bu, T(alpha, theta) and their adjoints.

Here ``Ax = x - int_0^. A x``, ``Bu = -int_0^. B u`` and
``T(alpha, theta) = alpha + int_0^. C theta``; feasible pairs satisfy
M(x, u) = T(w).  Dual elements of W^{1,2} are pairs (a, v) acting by
<a, z(0)> + int z'.v dt.

Integrals against dual densities use the cell-average rule
(:func:`ocstab.grid.cell_pairing`).  Combined with trapezoidal cumulative
integrals this makes the adjoint identities exact up to roundoff whenever the
system matrices are constant in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridFn, Trajectory, cell_pairing, cumulative_integral, integral
from .problem import OcProblem, Parameter


@dataclass(frozen=True, eq=False)
class DualElement:
    a: np.ndarray
    v: GridFn

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.shape != (self.v.dim,):
            raise ValueError(f"dual element slots disagree: a has shape {a.shape}, v has dim {self.v.dim}")
        object.__setattr__(self, "a", a)


def dual_pairing(d: DualElement, z: Trajectory) -> float:
    """<(a, v), z> = <a, z(0)> + int z'(t).v(t) dt."""
    return float(d.a @ z.initial()) + cell_pairing(z.derivative, d.v)


def _apply(mats: np.ndarray, f: np.ndarray) -> np.ndarray:
    return np.einsum("irc,ic->ir", mats, f)


def _apply_T(mats: np.ndarray, f: np.ndarray) -> np.ndarray:
    return np.einsum("irc,ir->ic", mats, f)


def apply_M(prob: OcProblem, x: Trajectory, u: GridFn) -> Trajectory:
    if x.grid != prob.grid or x.dim != prob.n:
        raise ValueError(f"x must be a dim-{prob.n} trajectory on the problem grid")
    prob.check_control(u)
    mats = prob.matrices
    rate = x.derivative.values - _apply(mats.A, x.state.values) - _apply(mats.B, u.values)
    return Trajectory.from_derivative(x.initial(), GridFn(prob.grid, rate))


def apply_T(prob: OcProblem, w: Parameter) -> Trajectory:
    prob.check_parameter(w)
    rate = _apply(prob.matrices.C, w.theta.values)
    return Trajectory.from_derivative(w.alpha, GridFn(prob.grid, rate))


def apply_T_star(prob: OcProblem, d: DualElement) -> tuple[np.ndarray, GridFn]:
    return d.a.copy(), GridFn(prob.grid, _apply_T(prob.matrices.C, d.v.values))


def apply_M_star(prob: OcProblem, d: DualElement) -> tuple[DualElement, GridFn]:
    """Adjoint of M: returns (A*(a, v), B*(a, v)).

    A*(a, v) = (a - int_0^1 A'v, v + int_0^. A'v - int_0^1 A'v),  B*(a, v) = -B'v.
    """
    mats = prob.matrices
    Atv = GridFn(prob.grid, _apply_T(mats.A, d.v.values))
    total = integral(Atv)
    v_part = d.v.values + cumulative_integral(Atv).values - total
    x_part = DualElement(d.a - total, GridFn(prob.grid, v_part))
    u_part = GridFn(prob.grid, -_apply_T(mats.B, d.v.values))
    return x_part, u_part


def adjoint_identity_residual(prob: OcProblem, x: Trajectory, u: GridFn, d: DualElement) -> float:
    """|<M(x, u), d> - <(x, u), M*d>| with the W^{1,2} x L^2 pairings."""
    lhs = dual_pairing(d, apply_M(prob, x, u))
    x_part, u_part = apply_M_star(prob, d)
    rhs = dual_pairing(x_part, x) + cell_pairing(u, u_part)
    return abs(lhs - rhs)


def T_identity_residual(prob: OcProblem, w: Parameter, d: DualElement) -> float:
    """|<T(w), d> - (<a, alpha> + int theta.C'v dt)|."""
    a, ctv = apply_T_star(prob, d)
    return abs(dual_pairing(d, apply_T(prob, w)) - (float(a @ w.alpha) + cell_pairing(w.theta, ctv)))
