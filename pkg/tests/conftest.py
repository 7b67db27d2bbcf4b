import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ocstab.grid import GridFn, TimeGrid, Trajectory
from ocstab.problem import Box, CostSpec, L2Ball, OcProblem, Parameter, SystemMatrices, Unconstrained

settings.register_profile("ocstab", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ocstab")


def smooth_fn(rng, grid, dim, scale=1.0):
    """Random band-limited function sampled on the grid."""
    t = grid.nodes[:, None]
    freq = rng.uniform(0.5, 3.0, size=dim)
    phase = rng.uniform(0, np.pi, size=dim)
    return GridFn(grid, scale * rng.normal(size=dim) * np.sin(freq * t + phase) + scale * rng.normal(size=dim))


def smooth_traj(rng, grid, dim):
    return Trajectory.from_derivative(rng.normal(size=dim), smooth_fn(rng, grid, dim))


def random_psd(rng, size, scale=1.0):
    G = rng.normal(size=(size, size))
    return scale * G @ G.T / size


def random_problem(rng, n=None, m=None, k=None, n_steps=40, control="unconstrained", running=True):
    n = n or int(rng.integers(1, 4))
    m = m or int(rng.integers(1, 4))
    k = k or int(rng.integers(1, 4))
    grid = TimeGrid(n_steps)
    mats = SystemMatrices.constant(grid, 0.5 * rng.normal(size=(n, n)), rng.normal(size=(n, m)), rng.normal(size=(n, k)))
    kw = dict(Q=random_psd(rng, n), q=rng.normal(size=n))
    if running:
        kw.update(Rx=random_psd(rng, n, 0.5), Ru=random_psd(rng, m, 0.5) + 0.1 * np.eye(m),
                  Rtheta=random_psd(rng, k, 0.5), rx=rng.normal(size=n), ru=rng.normal(size=m),
                  rtheta=rng.normal(size=k), r0=float(rng.normal()))
    cost = CostSpec.build(n, m, k, **kw)
    if control == "ball":
        cs = L2Ball(float(rng.uniform(0.3, 2.0)))
    elif control == "box":
        cs = Box(GridFn.constant(grid, -np.ones(m)), GridFn.constant(grid, np.ones(m)))
    else:
        cs = Unconstrained()
    return OcProblem(grid, mats, cost, cs)


def random_parameter(rng, prob):
    return Parameter(rng.normal(size=prob.n), smooth_fn(rng, prob.grid, prob.k, 0.5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def record(criterion, ok, detail):
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
