"""
Oscillating Dirichlet problem and its harmonic approximant
==========================================================

Solve div(A(x/eps) grad u) = 0 in the unit ball with boundary data
x1 x2, then compare u_eps with the harmonic function that shares its
values near the sphere of radius 7/8.
"""

import numpy as np

from homcrit.cell import layered_field
from homcrit.solver import BallProblem, boundary_from_preset, harmonic_approximant, solve_dirichlet

A = layered_field(64)
data = boundary_from_preset("product")

# The grid must resolve the oscillation: h <= eps / 16
for eps in (1 / 8, 1 / 16, 1 / 32):
    problem = BallProblem((0, 0, 0), 1.0, data, epsilon=eps, coefficients=A)
    u = solve_dirichlet(problem)
    approx = harmonic_approximant(u)
    print(f"eps = 1/{round(1 / eps):<3d} backend = {u.backend:<12s} h = {u.h:.5f}  "
          f"sup error = {approx.rel_sup:.3e}  gradient error = {approx.rel_grad:.3e}")

# The errors shrink at least like eps^(1/2); here the rate is close to 1
x = np.array([[0.2, -0.1, 0.3]])
print("u_eps(x) =", u.value(x)[0], " x1 x2 =", x[0, 0] * x[0, 1])
