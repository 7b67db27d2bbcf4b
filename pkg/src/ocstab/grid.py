"""Uniform time grid on [0, 1], nodal function samples and trapezoidal calculus."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"grid needs an integer n_steps >= 2, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def h(self) -> float:
        return 1.0 / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.n_nodes, dtype=float) / self.n_steps
        t.setflags(write=False)
        return t

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights, h/2 at the ends and h inside."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.setflags(write=False)
        return w


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GridFn:
    """Vector-valued function sampled at the grid nodes; ``values`` has shape (N+1, d)."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.grid.n_nodes or vals.shape[1] < 1:
            raise ValueError(
                f"expected samples of shape ({self.grid.n_nodes}, d), got {np.shape(self.values)}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFn samples must be finite")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, grid: TimeGrid, dim: int) -> GridFn:
        return cls(grid, np.zeros((grid.n_nodes, dim)))

    @classmethod
    def constant(cls, grid: TimeGrid, value) -> GridFn:
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.n_nodes, 1)))

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn) -> GridFn:
        """Sample ``fn(t)`` (scalar or vector valued, vectorised or not) at the nodes."""
        vals = np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float)
        return cls(grid, vals)

    def __call__(self, i: int) -> np.ndarray:
        return self.values[i]

    def _check_compatible(self, other: GridFn):
        if other.grid != self.grid or other.dim != self.dim:
            raise ValueError(
                f"GridFn mismatch: grid {self.grid.n_steps}/dim {self.dim} "
                f"vs grid {other.grid.n_steps}/dim {other.dim}"
            )

    def __add__(self, other):
        if isinstance(other, GridFn):
            self._check_compatible(other)
            return GridFn(self.grid, self.values + other.values)
        return GridFn(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFn):
            self._check_compatible(other)
            return GridFn(self.grid, self.values - other.values)
        return GridFn(self.grid, self.values - other)

    def __neg__(self):
        return GridFn(self.grid, -self.values)

    def __mul__(self, scalar):
        return GridFn(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return GridFn(self.grid, self.values / float(scalar))

    def to_csv(self, path=None) -> str:
        """Write ``t,v1,...,vd`` rows at full double precision; returns the text."""
        buf = io.StringIO()
        buf.write(",".join(["t"] + [f"v{j + 1}" for j in range(self.dim)]) + "\n")
        for t, row in zip(self.grid.nodes, self.values):
            buf.write(",".join("%.17g" % v for v in (t, *row)) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> GridFn:
        return cls.from_csv_text(Path(path).read_text())

    @classmethod
    def from_csv_text(cls, text: str) -> GridFn:
        """Inverse of :meth:`to_csv`."""
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0] != "t":
            raise ValueError("CSV header must start with 't'")
        data = np.array(body, dtype=float)
        grid = TimeGrid(len(body) - 1)
        if not np.allclose(data[:, 0], grid.nodes, atol=1e-14):
            raise ValueError("CSV time column is not a uniform grid on [0, 1]")
        return cls(grid, data[:, 1:])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Element of W^{1,p}: nodal states plus the derivative channel.

    The constructor enforces trapezoidal compatibility between the two channels,
    x_{i+1} - x_i = h/2 (dx_i + dx_{i+1}).
    """

    state: GridFn
    derivative: GridFn

    def __post_init__(self):
        self.state._check_compatible(self.derivative)
        dx = self.derivative.values
        jump = np.diff(self.state.values, axis=0)
        avg = 0.5 * self.state.grid.h * (dx[1:] + dx[:-1])
        scale = 1.0 + np.max(np.abs(self.state.values))
        if np.max(np.abs(jump - avg), initial=0.0) > 1e-12 * scale:
            raise ValueError("state and derivative are not trapezoid-compatible")

    @property
    def grid(self) -> TimeGrid:
        return self.state.grid

    @property
    def dim(self) -> int:
        return self.state.dim

    def initial(self) -> np.ndarray:
        return self.state.values[0]

    def final(self) -> np.ndarray:
        return self.state.values[-1]

    @classmethod
    def from_derivative(cls, x0, derivative: GridFn) -> Trajectory:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        state = cumulative_integral(derivative) + x0
        return cls(state, derivative)

    @classmethod
    def from_state(cls, state: GridFn) -> Trajectory:
        """Recover the derivative channel from nodal states.

        The trapezoid relation fixes the derivative up to one free vector; the
        endpoint derivative is taken from the one-sided second-order stencil.
        """
        x = state.values
        h = state.grid.h
        dx = np.empty_like(x)
        if state.grid.n_steps >= 2:
            dx[0] = (-3 * x[0] + 4 * x[1] - x[2]) / (2 * h)
        for i in range(state.grid.n_steps):
            dx[i + 1] = 2 * (x[i + 1] - x[i]) / h - dx[i]
        return cls.from_derivative(x[0], GridFn(state.grid, dx))


def cumulative_integral(f: GridFn) -> GridFn:
    h = f.grid.h
    steps = 0.5 * h * (f.values[1:] + f.values[:-1])
    out = np.zeros_like(f.values)
    out[1:] = np.cumsum(steps, axis=0)
    return GridFn(f.grid, out)


def integral(f: GridFn) -> np.ndarray:
    return f.grid.weights @ f.values


def lp_norm(f: GridFn, p: float = 2.0) -> float:
    if p < 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    pointwise = np.linalg.norm(f.values, axis=1)
    return float((f.grid.weights @ pointwise**p) ** (1.0 / p))


def pairing(f: GridFn, g: GridFn) -> float:
    """Trapezoidal approximation of the integral of <f(t), g(t)> over [0, 1]."""
    f._check_compatible(g)
    return float(f.grid.weights @ np.einsum("ij,ij->i", f.values, g.values))


def cell_pairing(f: GridFn, g: GridFn) -> float:
    """Sum over cells of h <f_avg, g_avg>, with f_avg the mean of the two end samples.

    This is the pairing under which the trapezoidal cumulative integral obeys
    summation by parts exactly, so discrete adjoints of integral operators are
    exact transposes.  It agrees with :func:`pairing` up to O(h^2).
    """
    f._check_compatible(g)
    fa = 0.5 * (f.values[1:] + f.values[:-1])
    ga = 0.5 * (g.values[1:] + g.values[:-1])
    return float(f.grid.h * np.sum(fa * ga))


def sobolev_norm(x: Trajectory, p: float = 2.0) -> float:
    return float(np.linalg.norm(x.initial())) + lp_norm(x.derivative, p)
