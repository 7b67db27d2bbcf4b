"""Value V just outside the reachable ellipse, as a function of the ellipse quadratic q(alpha).

Points with small q > 0 have small V, so a threshold such as V > 1e-3 does not
hold uniformly over the Outside class.
"""

import argparse
from dataclasses import dataclass

import numpy as np

from ocstab.oracle import double_integrator, ellipse_quadratic
from ocstab.problem import Parameter
from ocstab.solver import solve


@dataclass(frozen=True)
class Config:
    grid: int = 200
    angle: float = -0.8
    scales: tuple = (1.01, 1.05, 1.1, 1.25, 1.5, 2.0)


def run(cfg: Config):
    prob = double_integrator(cfg.grid)
    L = np.linalg.cholesky(np.array([[12.0, 6.0], [6.0, 4.0]]))
    on_ellipse = np.linalg.solve(L.T, [np.cos(cfg.angle), np.sin(cfg.angle)])
    print(f"{'scale':>6} {'alpha':>22} {'q':>9} {'V':>11}")
    for s in cfg.scales:
        alpha = s * on_ellipse
        v = solve(prob, Parameter.zero_theta(alpha, prob.grid, 2)).value
        print(f"{s:6.2f} {np.array2string(alpha, precision=4):>22} {ellipse_quadratic(alpha):9.4f} {v:11.3e}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--grid", type=int, default=Config.grid)
    p.add_argument("--angle", type=float, default=Config.angle)
    a = p.parse_args()
    run(Config(grid=a.grid, angle=a.angle))
