"""Trapezoidal (Crank-Nicolson) integrators for the state, costate and homogeneous adjoint systems."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import StepSingular
from .grid import GridFn, Trajectory
from .problem import OcProblem, Parameter

COND_LIMIT = 1e13
KERNEL_RTOL = 1e-8


def _inverses(mats: np.ndarray, sign: float, h: float) -> np.ndarray:
    """Stacked inverses of I + sign*(h/2)*mats[i]; raises StepSingular at the first bad node."""
    n = mats.shape[1]
    step = np.eye(n) + sign * 0.5 * h * mats
    conds = np.linalg.cond(step)
    bad = np.flatnonzero(~(conds < COND_LIMIT))
    if bad.size:
        raise StepSingular(int(bad[0]))
    return np.linalg.inv(step)


class _Stepper:
    """Per-problem cache of the trapezoidal step matrices.

    With E_i = I - h/2 A(t_i) and F_i = I + h/2 A(t_i) the forward step is
    E_{i+1} x_{i+1} = F_i x_i + h/2 (b_i + b_{i+1}).
    """

    def __init__(self, A: np.ndarray, h: float):
        self.A = A
        self.h = h
        self.n = A.shape[1]
        eye = np.eye(self.n)
        self.E = eye - 0.5 * h * A
        self.F = eye + 0.5 * h * A
        self._Einv = None
        self._Finv = None

    @property
    def Einv(self) -> np.ndarray:
        if self._Einv is None:
            self._Einv = _inverses(self.A, -1.0, self.h)
        return self._Einv

    @property
    def Finv(self) -> np.ndarray:
        if self._Finv is None:
            self._Finv = _inverses(self.A, 1.0, self.h)
        return self._Finv


@lru_cache(maxsize=64)
def _stepper(prob: OcProblem) -> _Stepper:
    return _Stepper(prob.matrices.A, prob.grid.h)


def _forcing(prob: OcProblem, u: np.ndarray, theta: np.ndarray) -> np.ndarray:
    mats = prob.matrices
    return np.einsum("inm,im->in", mats.B, u) + np.einsum("ink,ik->in", mats.C, theta)


def integrate_state(prob: OcProblem, u: GridFn, w: Parameter) -> Trajectory:
    """Trapezoidal solution of x' = A x + B u + C theta, x(0) = alpha."""
    prob.check_control(u)
    prob.check_parameter(w)
    st = _stepper(prob)
    h = prob.grid.h
    b = _forcing(prob, u.values, w.theta.values)
    rhs_b = 0.5 * h * (b[:-1] + b[1:])
    Einv, F = st.Einv, st.F
    x = np.empty((prob.grid.n_nodes, prob.n))
    x[0] = w.alpha
    for i in range(prob.grid.n_steps):
        x[i + 1] = Einv[i + 1] @ (F[i] @ x[i] + rhs_b[i])
    dx = np.einsum("inj,ij->in", prob.matrices.A, x) + b
    # re-accumulate the state from the derivative so both channels agree to roundoff
    return Trajectory.from_derivative(w.alpha, GridFn(prob.grid, dx))


@dataclass(frozen=True, eq=False)
class AdjointState:
    y: GridFn
    derivative: GridFn

    @property
    def terminal(self) -> np.ndarray:
        return self.y.values[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.y.values[0]


def _backward_trapezoid(prob: OcProblem, terminal: np.ndarray, Lx: np.ndarray) -> np.ndarray:
    """Solve y' + A'y = L_x backward from y(1) = terminal with the trapezoidal rule."""
    st = _stepper(prob)
    h = prob.grid.h
    EinvT = np.transpose(st.Einv, (0, 2, 1))
    FT = np.transpose(st.F, (0, 2, 1))
    N = prob.grid.n_steps
    y = np.empty((N + 1, prob.n))
    y[N] = terminal
    src = 0.5 * h * (Lx[:-1] + Lx[1:])
    for i in range(N - 1, -1, -1):
        y[i] = EinvT[i] @ (FT[i + 1] @ y[i + 1] - src[i])
    return y


def solve_adjoint(prob: OcProblem, xbar: Trajectory, ubar: GridFn, thetabar: GridFn) -> AdjointState:
    """Costate of the sensitivity formulas: y' + A'y = L_x, y(1) = -g'(x(1))."""
    Lx, _, _ = prob.cost.running_grads(xbar.state.values, ubar.values, thetabar.values)
    terminal = -prob.cost.terminal_grad(xbar.final())
    y = _backward_trapezoid(prob, terminal, Lx)
    dy = Lx - np.einsum("inj,in->ij", prob.matrices.A, y)
    y[-1] = terminal
    return AdjointState(GridFn(prob.grid, y), GridFn(prob.grid, dy))


def discrete_costate(prob: OcProblem, x: Trajectory, u: GridFn, theta: GridFn) -> GridFn:
    """Nodal costate of the *discretised* cost functional.

    Back-substitution through the trapezoidal state recursion and the
    trapezoidal cost quadrature.  With this costate, L_u - B'y and
    L_theta - C'y are the exact L2 (trapezoid-weighted) gradients of the
    discrete cost; it differs from :func:`solve_adjoint` by O(h^2).
    """
    st = _stepper(prob)
    N = prob.grid.n_steps
    w = prob.grid.weights
    Lx, _, _ = prob.cost.running_grads(x.state.values, u.values, theta.values)
    EinvT = np.transpose(st.Einv, (0, 2, 1))
    FT = np.transpose(st.F, (0, 2, 1))
    lam = np.zeros((N + 2, prob.n))  # lam[0] and lam[N+1] stay zero
    lam[N] = EinvT[N] @ (-prob.cost.terminal_grad(x.final()) - w[N] * Lx[N])
    for j in range(N - 1, 0, -1):
        lam[j] = EinvT[j] @ (FT[j] @ lam[j + 1] - w[j] * Lx[j])
    mu = 0.5 * prob.grid.h * (lam[:-1] + lam[1:]) / w[:, None]
    return GridFn(prob.grid, mu)


def transition_matrix(prob: OcProblem) -> np.ndarray:
    """Fundamental matrix of v' = -A'v with Phi(0) = I, shape (N+1, n, n)."""
    st = _stepper(prob)
    FinvT = np.transpose(st.Finv, (0, 2, 1))
    ET = np.transpose(st.E, (0, 2, 1))
    N = prob.grid.n_steps
    phi = np.empty((N + 1, prob.n, prob.n))
    phi[0] = np.eye(prob.n)
    for i in range(N):
        phi[i + 1] = FinvT[i + 1] @ (ET[i] @ phi[i])
    return phi


@dataclass(frozen=True, eq=False)
class SingularSystem:
    kernel_basis: list
    K: np.ndarray
    phi: np.ndarray
    sigma_min: float

    def path(self, b: np.ndarray) -> np.ndarray:
        """Nodal samples of v(t) = Phi(t) b."""
        return self.phi @ b


def kernel_basis(M: np.ndarray, rtol: float = KERNEL_RTOL) -> tuple[list, float]:
    """Orthonormal basis of ker M by SVD, and the smallest singular value."""
    _, s, vt = np.linalg.svd(M)
    smax = s.max() if s.size else 0.0
    rank = int(np.sum(s > rtol * smax))
    return [vt[i].copy() for i in range(rank, M.shape[1])], float(s.min()) if s.size else 0.0


def solve_singular_system(prob: OcProblem, K: np.ndarray | None = None) -> SingularSystem:
    """Admissible initial values v(0) for the homogeneous fixed-point system.

    v' = -A'v and v(0) = int_0^1 A'v dt.  Writing v = Phi v(0) turns the second
    condition into (I - K) v(0) = 0 with K = int_0^1 A' Phi dt.  ``K`` may be
    injected to exercise non-trivial kernels.
    """
    phi = transition_matrix(prob)
    if K is None:
        AT = np.transpose(prob.matrices.A, (0, 2, 1))
        K = np.einsum("i,ijk->jk", prob.grid.weights, AT @ phi)
    basis, smin = kernel_basis(np.eye(prob.n) - K)
    return SingularSystem(basis, np.asarray(K), phi, smin)
