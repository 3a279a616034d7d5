"""Scattering length of a square well computed three ways, plus the N-scaling law.

Run: python3 demos/scattering_length.py
"""

import numpy as np

from gplab.scattering import (RadialPotential, integral_identity, scattering_length_variational,
                              solve_zero_energy, square_well_length)

V = RadialPotential.square_well(2.0, 1.0)
sol = solve_zero_energy(V)
print(f"closed form        a = {square_well_length(2.0, 1.0):.12f}")
print(f"zero-energy ODE    a = {sol.a:.12f}")
print(f"variational        a = {scattering_length_variational(V):.12f}")
print(f"integral of V f/8pi  = {integral_identity(sol):.12f}")

# the rescaled potential N^2 V(N r) has scattering length a / N
for N in (2, 4, 8):
    aN = solve_zero_energy(V.scaled(N)).a
    print(f"N = {N}:  N * a_N = {N * aN:.10f}")

# the solution is 1 - a/r outside the support
r = np.array([1.5, 3.0, 10.0])
print("f(r) =", sol(r), " 1 - a/r =", 1 - sol.a / r)
