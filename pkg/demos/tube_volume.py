"""
Tube volume around the critical set
===================================

Monte Carlo volume of the r-neighbourhood of the critical segment of
x1 x2, against pi r^2 + 4/3 pi r^3.
"""

import numpy as np

from homcrit import geometry as geo
from homcrit.solver import BallProblem, boundary_from_preset, solve_harmonic

u = solve_harmonic(BallProblem((0, 0, 0), 1.0, boundary_from_preset("product")), n=64)
region = geo.ball_region((0, 0, 0), 0.5)
cps = geo.find_critical_points(u, region.grow(0.1))
S = geo.critical_skeleton(cps, 4 * u.h, region)

for r, v, se, ratio in geo.tube_sweep(S, [0.2, 0.1, 0.05, 0.025]):
    exact = np.pi * r * r + 4 / 3 * np.pi * r ** 3
    print(f"r = {r:<6} volume = {v:.5f} +- {se:.5f}  exact = {exact:.5f}  volume / r^2 = {ratio:.3f}")
