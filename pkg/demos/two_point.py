"""
Two critical points and the invariant direction
===============================================

u = x1 x2 + tau x1 x3 has critical points on the x3-axis; the degree-2
part at 0 is almost invariant along the segment to t e3.
"""

import numpy as np

from homcrit.harness.suites import two_point_case

for tau in (0.02, 0.05, 0.1, 0.2):
    for t in (0.1, 0.2):
        c = two_point_case(tau, t)
        print(f"tau = {tau:<5} t = {t}  eta = {c['eta']:.3e}  ratio = {c['ratio']:.3e}  "
              f"ratio / sqrt(eta) = {c['ratio'] / np.sqrt(c['eta']):.4f}")

# the ratio / sqrt(eta) column approaches 1/sqrt(3) as tau t -> 0
print(1 / np.sqrt(3))
