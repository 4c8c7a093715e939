"""
Turning of the degree-2 projection in a layered medium
======================================================

Normalized degree-2 projections of u_eps at 1/4 and at 2^-(J+3),
compared with the doubling-index telescope.
"""

import numpy as np

from homcrit.harness.suites import turning_ladder
from homcrit.cell import layered_field
from homcrit.solver import BallProblem, boundary_from_preset, solve_dirichlet

A = layered_field(64)
for eps in (1 / 16, 1 / 32):
    u = solve_dirichlet(BallProblem((0, 0, 0), 1.0, boundary_from_preset("product"), epsilon=eps, coefficients=A))
    rows, _ = turning_ladder(u, eps, ell=2, window=1 / 32)
    for r in rows:
        print(f"eps = 1/{round(1 / eps)}  J = {r['J']}  D = {r['D']:.3e}  8T = {8 * r['T']:.3e}  "
              f"D / sqrt(2^J eps) = {r['C_J']:.4f}")
    print("fitted C:", max(r["C_J"] for r in rows))
