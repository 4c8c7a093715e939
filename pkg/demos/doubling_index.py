"""
Doubling index and frequency
============================

For homogeneous harmonic polynomials both the doubling index and the
frequency equal the degree at every scale.
"""

import numpy as np

from homcrit.solver import BallProblem, boundary_from_preset, solve_harmonic
from homcrit.spectra import almgren_frequency, doubling_index, expansion_from_degrees, spectral_doubling, spectral_frequency

for name, degree in (("linear", 1), ("product", 2), ("cubic", 3)):
    u = solve_harmonic(BallProblem((0, 0, 0), 1.0, boundary_from_preset(name)), n=128)
    for r in (1 / 8, 1 / 4, 1 / 2):
        ns = doubling_index(u, (0, 0, 0), r).N_star
        N = almgren_frequency(u, (0, 0, 0), r).N
        print(f"{name:8s} r = {r:5.3f}  N* - l = {ns - degree:+.1e}  N - l = {N - degree:+.1e}")

# A mixture of degrees 1 and 3: N* sits between N(r/2) and N(r)
e = expansion_from_degrees([0, 1.0, 0, 0.5], seed=0)
for t in np.geomspace(0.1, 1, 5):
    print(f"t = {t:.3f}  N(t/2) = {spectral_frequency(e, t / 2):.4f}  "
          f"N*(t) = {spectral_doubling(e, t):.4f}  N(t) = {spectral_frequency(e, t):.4f}")
