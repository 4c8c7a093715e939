"""
Critical points and their cover
===============================

Detect the critical set of x1 x2 (a segment of the x3-axis) and of its
layered-medium perturbation, then build the good/bad cover.
"""

import numpy as np

from homcrit import geometry as geo
from homcrit.cell import homogenized_matrix, layered_field, solve_cell_problem
from homcrit.solver import BallProblem, boundary_from_preset, solve_dirichlet, solve_harmonic

data = boundary_from_preset("product")
region = geo.ball_region((0, 0, 0), 0.5)

u = solve_harmonic(BallProblem((0, 0, 0), 2.0, data), n=128)
pts = [c.x for c in geo.find_critical_points(u, region)]
print(len(pts), "critical points for A = I")
for eps in (1 / 16, 1 / 32, 1 / 64):
    cover = geo.build_cover(u, pts, 2, 1 / 64, eps, 1 / 32, region)
    print(f"eps = 1/{round(1 / eps)}  balls = {len(cover.selected)}  sum r = {cover.account}  "
          f"disjoint = {cover.disjoint}  contained = {cover.contained}")

A = layered_field(64)
C = solve_cell_problem(A)
E = geo.ellipsoid_region(homogenized_matrix(A, C), 0.5)
u_eps = solve_dirichlet(BallProblem((0, 0, 0), 2.0, data, epsilon=1 / 16, coefficients=A), C=C)
cps = geo.find_critical_points(u_eps, E.grow(0.05))
X = np.array([c.x for c in cps])
X = X[E.contains(X)]
print(len(X), "critical points in E_1/2, mean x1 =", X[:, 0].mean())
cover = geo.build_cover(u_eps, X, 2, 1 / 64, 1 / 16, 1 / 32, E)
print("layered sum r =", cover.account, "contained =", cover.contained)
