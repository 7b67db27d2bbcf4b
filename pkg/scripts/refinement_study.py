"""Grid refinement of the boundary example: alpha* = 2 x(1) shrinks like h^2.

The discrete minimum-energy control that steers (0, 1/2) to the origin has
energy slightly above one, so the ball-constrained optimum stops short of the
origin by O(h^2) and alpha* inherits that offset.
"""

import argparse
from dataclasses import dataclass

import numpy as np

from ocstab.oracle import double_integrator
from ocstab.problem import Parameter
from ocstab.solver import solve
from ocstab.subdiff import compute_subdifferential


@dataclass(frozen=True)
class Config:
    alpha: tuple = (0.0, 0.5)
    grids: tuple = (100, 200, 400, 800, 1600, 3200)


def run(cfg: Config):
    print(f"{'N':>6} {'V':>11} {'|x(1)|':>11} {'|alpha*|':>11} {'ratio':>7}")
    prev = None
    for n in cfg.grids:
        prob = double_integrator(n)
        w = Parameter.zero_theta(cfg.alpha, prob.grid, 2)
        res = solve(prob, w)
        sd = compute_subdifferential(prob, w, res.xbar, res.ubar, optimality_residual=res.optimality_residual)
        a = np.linalg.norm(sd.alpha_star)
        ratio = f"{prev / a:7.3f}" if prev else " " * 7
        print(f"{n:6d} {res.value:11.3e} {np.linalg.norm(res.xbar.final()):11.3e} {a:11.3e} {ratio}")
        prev = a


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha", type=float, nargs=2, default=Config.alpha)
    p.add_argument("--grids", type=int, nargs="+", default=Config.grids)
    a = p.parse_args()
    run(Config(tuple(a.alpha), tuple(a.grids)))
