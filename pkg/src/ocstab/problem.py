"""Problem data for the parametric linear-quadratic control problem.

    minimise   g(x(1)) + int_0^1 L(t, x, u, theta) dt
    subject to x' = A x + B u + C theta,  x(0) = alpha,  u in U

with g, L convex quadratics and U an L2 ball, a box or the whole space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FeasibilityError
from .grid import GridFn, TimeGrid, Trajectory, cumulative_integral, lp_norm, pairing

PSD_FLOOR = -1e-12
A5_TOL = 1e-10
BOUNDARY_RTOL = 1e-8


def _as_matrix_samples(grid: TimeGrid, value, shape: tuple[int, int], name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == shape:
        arr = np.broadcast_to(arr, (grid.n_nodes, *shape))
    if arr.shape != (grid.n_nodes, *shape):
        raise ValueError(f"{name}: expected {shape} or ({grid.n_nodes}, {shape[0]}, {shape[1]}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SystemMatrices:
    """Nodal samples of A(t) (n x n), B(t) (n x m) and C(t) (n x k)."""

    grid: TimeGrid
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        n = A.shape[-1]
        m = np.asarray(self.B).shape[-1]
        k = np.asarray(self.C).shape[-1]
        object.__setattr__(self, "A", _as_matrix_samples(self.grid, self.A, (n, n), "A"))
        object.__setattr__(self, "B", _as_matrix_samples(self.grid, self.B, (n, m), "B"))
        object.__setattr__(self, "C", _as_matrix_samples(self.grid, self.C, (n, k), "C"))

    @classmethod
    def constant(cls, grid: TimeGrid, A, B, C) -> SystemMatrices:
        return cls(grid, np.asarray(A, dtype=float), np.asarray(B, dtype=float), np.asarray(C, dtype=float))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.A.shape[1], self.B.shape[2], self.C.shape[2]


def _sym_psd(mat, size: int, name: str) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.shape != (size, size):
        raise ValueError(f"{name}: expected shape ({size}, {size}), got {mat.shape}")
    if not np.allclose(mat, mat.T, atol=1e-12, rtol=0):
        raise ValueError(f"{name}: matrix is not symmetric")
    if size and np.linalg.eigvalsh(mat).min() < PSD_FLOOR:
        raise ValueError(f"{name}: matrix is not positive semidefinite")
    return mat


def _vec(v, size: int, name: str) -> np.ndarray:
    v = np.zeros(size) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (size,):
        raise ValueError(f"{name}: expected length {size}, got shape {v.shape}")
    return v


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Convex quadratic costs.

    g(x) = x'Qx + q'x + c0 and
    L(x, u, theta) = x'Rx x + u'Ru u + theta'Rtheta theta + rx'x + ru'u + rtheta'theta + r0.

    Anything with the same five methods (``terminal``, ``terminal_grad``,
    ``running``, ``running_grads`` and ``dims``) can stand in for it.
    """

    Q: np.ndarray
    q: np.ndarray
    c0: float
    Rx: np.ndarray
    Ru: np.ndarray
    Rtheta: np.ndarray
    rx: np.ndarray
    ru: np.ndarray
    rtheta: np.ndarray
    r0: float = 0.0

    @classmethod
    def build(cls, n: int, m: int, k: int, *, Q=None, q=None, c0=0.0, Rx=None, Ru=None,
              Rtheta=None, rx=None, ru=None, rtheta=None, r0=0.0) -> CostSpec:
        """Validate and assemble; omitted pieces are zero."""
        return cls(
            Q=_sym_psd(np.zeros((n, n)) if Q is None else Q, n, "cost.Q"),
            q=_vec(q, n, "cost.q"),
            c0=float(c0),
            Rx=_sym_psd(np.zeros((n, n)) if Rx is None else Rx, n, "cost.Rx"),
            Ru=_sym_psd(np.zeros((m, m)) if Ru is None else Ru, m, "cost.Ru"),
            Rtheta=_sym_psd(np.zeros((k, k)) if Rtheta is None else Rtheta, k, "cost.Rtheta"),
            rx=_vec(rx, n, "cost.rx"),
            ru=_vec(ru, m, "cost.ru"),
            rtheta=_vec(rtheta, k, "cost.rtheta"),
            r0=float(r0),
        )

    @property
    def dims(self) -> tuple[int, int, int]:
        return len(self.q), len(self.ru), len(self.rtheta)

    def terminal(self, x1: np.ndarray) -> float:
        return float(x1 @ self.Q @ x1 + self.q @ x1 + self.c0)

    def terminal_grad(self, x1: np.ndarray) -> np.ndarray:
        return 2.0 * self.Q @ x1 + self.q

    def running(self, x: np.ndarray, u: np.ndarray, th: np.ndarray) -> np.ndarray:
        """Nodal values of L for sample arrays of shape (N+1, .)."""
        return (
            np.einsum("ij,jk,ik->i", x, self.Rx, x)
            + np.einsum("ij,jk,ik->i", u, self.Ru, u)
            + np.einsum("ij,jk,ik->i", th, self.Rtheta, th)
            + x @ self.rx + u @ self.ru + th @ self.rtheta + self.r0
        )

    def running_grads(self, x: np.ndarray, u: np.ndarray, th: np.ndarray):
        """Nodal partial derivatives (L_x, L_u, L_theta)."""
        return (
            2.0 * x @ self.Rx + self.rx,
            2.0 * u @ self.Ru + self.ru,
            2.0 * th @ self.Rtheta + self.rtheta,
        )

    @property
    def has_running_cost(self) -> bool:
        return any(np.any(a != 0) for a in (self.Rx, self.Ru, self.Rtheta, self.rx, self.ru, self.rtheta)) or self.r0 != 0


# control sets -------------------------------------------------------------


@dataclass(frozen=True)
class Unconstrained:
    kind = "unconstrained"

    def project(self, u: GridFn) -> GridFn:
        return u

    def violation(self, u: GridFn) -> float:
        return 0.0


@dataclass(frozen=True)
class L2Ball:
    radius: float

    kind = "l2ball"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"L2Ball radius must be positive, got {self.radius}")

    @property
    def boundary_tol(self) -> float:
        return BOUNDARY_RTOL * self.radius

    def project(self, u: GridFn) -> GridFn:
        norm = lp_norm(u, 2)
        if norm <= self.radius:
            return u
        return u * (self.radius / norm)

    def violation(self, u: GridFn) -> float:
        return max(0.0, lp_norm(u, 2) - self.radius)

    def on_boundary(self, u: GridFn) -> bool:
        return abs(lp_norm(u, 2) - self.radius) <= self.boundary_tol


@dataclass(frozen=True, eq=False)
class Box:
    lower: GridFn
    upper: GridFn

    kind = "box"

    def __post_init__(self):
        self.lower._check_compatible(self.upper)
        if np.any(self.lower.values >= self.upper.values):
            raise ValueError("Box bounds need lower < upper at every node")

    def project(self, u: GridFn) -> GridFn:
        return GridFn(u.grid, np.clip(u.values, self.lower.values, self.upper.values))

    def violation(self, u: GridFn) -> float:
        over = np.maximum(u.values - self.upper.values, 0) + np.maximum(self.lower.values - u.values, 0)
        return lp_norm(GridFn(u.grid, over), 2)

    def active_masks(self, u: GridFn):
        width = self.upper.values - self.lower.values
        tol = BOUNDARY_RTOL * width
        return u.values >= self.upper.values - tol, u.values <= self.lower.values + tol


ControlSet = Unconstrained | L2Ball | Box


@dataclass(frozen=True, eq=False)
class Parameter:
    """The perturbation pair w = (alpha, theta)."""

    alpha: np.ndarray
    theta: GridFn

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def zero_theta(cls, alpha, grid: TimeGrid, k: int) -> Parameter:
        return cls(np.asarray(alpha, dtype=float), GridFn.zeros(grid, k))

    def shifted(self, d_alpha=None, d_theta: GridFn | None = None) -> Parameter:
        alpha = self.alpha if d_alpha is None else self.alpha + np.asarray(d_alpha, dtype=float)
        theta = self.theta if d_theta is None else self.theta + d_theta
        return Parameter(alpha, theta)


@dataclass(frozen=True, eq=False)
class OcProblem:
    grid: TimeGrid
    matrices: SystemMatrices
    cost: CostSpec
    control_set: ControlSet = field(default_factory=Unconstrained)

    def __post_init__(self):
        if self.matrices.grid != self.grid:
            raise ValueError("system matrices live on a different grid")
        if tuple(self.cost.dims) != self.dims:
            raise ValueError(f"cost dims {self.cost.dims} do not match system dims {self.dims}")
        if isinstance(self.control_set, Box):
            if self.control_set.lower.grid != self.grid or self.control_set.lower.dim != self.dims[1]:
                raise ValueError("Box bounds must be sampled on the problem grid with dim m")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.matrices.dims

    @property
    def n(self) -> int:
        return self.dims[0]

    @property
    def m(self) -> int:
        return self.dims[1]

    @property
    def k(self) -> int:
        return self.dims[2]

    def check_parameter(self, w: Parameter):
        if w.alpha.shape != (self.n,):
            raise ValueError(f"alpha must have length {self.n}, got {w.alpha.shape}")
        if w.theta.grid != self.grid or w.theta.dim != self.k:
            raise ValueError(f"theta must be a dim-{self.k} GridFn on the problem grid")

    def check_control(self, u: GridFn):
        if u.grid != self.grid or u.dim != self.m:
            raise ValueError(f"control must be a dim-{self.m} GridFn on the problem grid")

    def with_grid(self, n_steps: int) -> OcProblem:
        """Same problem on another grid; only valid for time-invariant data."""
        grid = TimeGrid(n_steps)
        mats = self.matrices
        for arr in (mats.A, mats.B, mats.C):
            if not np.all(arr == arr[0]):
                raise ValueError("regridding needs time-invariant system matrices")
        cs = self.control_set
        if isinstance(cs, Box):
            lo, up = cs.lower.values, cs.upper.values
            if not (np.all(lo == lo[0]) and np.all(up == up[0])):
                raise ValueError("regridding needs constant box bounds")
            cs = Box(GridFn.constant(grid, lo[0]), GridFn.constant(grid, up[0]))
        return OcProblem(grid, SystemMatrices.constant(grid, mats.A[0], mats.B[0], mats.C[0]), self.cost, cs)


# costs and gradients --------------------------------------------------------


def eval_cost(prob: OcProblem, x: Trajectory, u: GridFn, w: Parameter) -> float:
    if x.grid != prob.grid or x.dim != prob.n:
        raise ValueError(f"trajectory must be dim-{prob.n} on the problem grid")
    prob.check_control(u)
    prob.check_parameter(w)
    running = prob.cost.running(x.state.values, u.values, w.theta.values)
    return prob.cost.terminal(x.final()) + float(prob.grid.weights @ running)


@dataclass(frozen=True, eq=False)
class CostGradients:
    g_prime_at_1: np.ndarray
    Jx_vec: np.ndarray
    Jx_fn: GridFn
    Ju: GridFn
    Jtheta: GridFn
    Lx: GridFn


def cost_gradients(prob: OcProblem, x: Trajectory, u: GridFn, theta: GridFn) -> CostGradients:
    """Frechet derivative of the cost in the (x(0), x', u, theta) coordinates."""
    if x.grid != prob.grid or x.dim != prob.n:
        raise ValueError(f"trajectory must be dim-{prob.n} on the problem grid")
    prob.check_control(u)
    if theta.grid != prob.grid or theta.dim != prob.k:
        raise ValueError(f"theta must be a dim-{prob.k} GridFn on the problem grid")
    grid = prob.grid
    Lx, Lu, Lth = prob.cost.running_grads(x.state.values, u.values, theta.values)
    gp = prob.cost.terminal_grad(x.final())
    Lx_fn = GridFn(grid, Lx)
    cum = cumulative_integral(Lx_fn).values
    tail = cum[-1] - cum  # int_t^1 L_x
    return CostGradients(
        g_prime_at_1=gp,
        Jx_vec=gp + cum[-1],
        Jx_fn=GridFn(grid, gp + tail),
        Ju=GridFn(grid, Lu),
        Jtheta=GridFn(grid, Lth),
        Lx=Lx_fn,
    )


# normal cones ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConeMembership:
    member: bool
    residual: float
    branch: str
    certificate: object = None


def normal_cone_membership(cs: ControlSet, ubar: GridFn, ustar: GridFn, tol: float = 1e-8) -> ConeMembership:
    """Test u* in N(ubar; U); ``residual`` is the L2 distance from u* to the cone.

    Certificates: the ray multiplier lambda for a ball, the cone-projected
    multiplier field for a box.
    """
    ubar._check_compatible(ustar)
    if isinstance(cs, Unconstrained):
        res = lp_norm(ustar, 2)
        return ConeMembership(res <= tol, res, "unconstrained", 0.0)

    if isinstance(cs, L2Ball):
        norm = lp_norm(ubar, 2)
        if norm > cs.radius + max(tol, cs.boundary_tol):
            raise FeasibilityError(f"||u||_2 = {norm:.12g} exceeds radius {cs.radius}")
        if norm < cs.radius - cs.boundary_tol:
            res = lp_norm(ustar, 2)
            return ConeMembership(res <= tol, res, "interior", 0.0)
        lam = pairing(ustar, ubar) / norm**2
        res = lp_norm(ustar - ubar * max(lam, 0.0), 2)
        return ConeMembership(lam >= -tol and res <= tol, res, "boundary", lam)

    if isinstance(cs, Box):
        if cs.violation(ubar) > tol:
            raise FeasibilityError(f"control violates box bounds by {cs.violation(ubar):.3g} in L2")
        at_up, at_lo = cs.active_masks(ubar)
        v = ustar.values
        # cone at a node: [0, inf) when at upper, (-inf, 0] at lower, {0} inside
        proj = np.where(at_up, np.maximum(v, 0.0), 0.0) + np.where(at_lo & ~at_up, np.minimum(v, 0.0), 0.0)
        ok_up = np.where(at_up, v >= -tol, True)
        ok_lo = np.where(at_lo & ~at_up, v <= tol, True)
        ok_in = np.where(at_up | at_lo, True, np.abs(v) <= tol)
        res = lp_norm(GridFn(ubar.grid, v - proj), 2)
        member = bool(np.all(ok_up & ok_lo & ok_in))
        return ConeMembership(member, res, "box", GridFn(ubar.grid, proj))

    raise TypeError(f"unknown control set {cs!r}")


# assumption check -------------------------------------------------------------


@dataclass(frozen=True)
class A5Check:
    holds: bool
    c3: float


def check_A5(C: np.ndarray, tol: float = A5_TOL) -> A5Check:
    """Uniform lower bound c3 on ||C(t)' v|| / ||v|| over the grid nodes.

    A positive bound makes C' injective at every node, which is enough for the
    range conditions behind the sensitivity formulas.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim == 2:
        C = C[None]
    n, k = C.shape[1], C.shape[2]
    if n == 0:
        return A5Check(True, np.inf)
    if k < n:
        return A5Check(False, 0.0)
    sv = np.linalg.svd(np.transpose(C, (0, 2, 1)), compute_uv=False)
    c3 = float(sv.min())
    return A5Check(c3 > tol, c3)
