"""Solve the three double-integrator demos and print V, alpha*, theta* and the cone certificate."""

import argparse
from dataclasses import dataclass

import numpy as np

from ocstab.cli import demo_path
from ocstab.grid import lp_norm
from ocstab.io import load_problem
from ocstab.solver import solve
from ocstab.subdiff import compute_singular_subdifferential, compute_subdifferential


@dataclass(frozen=True)
class Config:
    grid: int = 200
    demos: tuple = ("double_integrator_interior", "double_integrator_boundary", "double_integrator_outside")


def run(cfg: Config):
    print(f"{'demo':<28} {'V':>10} {'flag':>9} {'|u|':>10} {'alpha*':>26} {'|theta*|':>9} {'lambda':>9} status")
    for name in cfg.demos:
        prob, w, _ = load_problem(demo_path(name), cfg.grid)
        res = solve(prob, w)
        sd = compute_subdifferential(prob, w, res.xbar, res.ubar, optimality_residual=res.optimality_residual)
        ssd = compute_singular_subdifferential(prob, w, res.ubar)
        lam = sd.cone_certificate if isinstance(sd.cone_certificate, float) else float("nan")
        print(f"{name:<28} {res.value:10.3e} {res.boundary_flag:>9} {lp_norm(res.ubar):10.6f} "
              f"{np.array2string(sd.alpha_star, precision=3, floatmode='maxprec'):>26} "
              f"{lp_norm(sd.theta_star):9.2e} {lam:9.3e} {sd.status}/{ssd.status}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--grid", type=int, default=Config.grid)
    run(Config(grid=p.parse_args().grid))
