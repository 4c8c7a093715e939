"""
Cell problem for a layered medium
=================================

Solve the periodic corrector equations for a(y) = 2 + sin(2 pi y1) and
look at the effective matrix and the invertibility margin.
"""

import numpy as np

from homcrit.cell import homogenized_matrix, layered_field, min_det_check, solve_cell_problem

# Layers only vary along y1, so the solver works on an (n, 1, 1) grid
A = layered_field(256)
C = solve_cell_problem(A)

# Across the layers the effective coefficient is the harmonic mean,
# sqrt(3); along them it is the arithmetic mean, 2
a_hat = homogenized_matrix(A, C)
print(np.round(a_hat, 12))

# det(I + grad chi) = sqrt(3) / a(y1), smallest where a = 3
mu = min_det_check(C)["mu"]
print(f"mu = {mu:.6f}   sqrt(3)/3 = {np.sqrt(3) / 3:.6f}")

# Convergence of mu with the cell resolution: second order
for n in (32, 64, 128, 256):
    C = solve_cell_problem(layered_field(n))
    print(n, abs(min_det_check(C)["mu"] - np.sqrt(3) / 3))
