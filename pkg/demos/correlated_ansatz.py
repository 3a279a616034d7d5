"""Pair-correlated trial states lower the energy of a condensate.

The state prod_{i<j} f(N|x_i - x_j|) prod_i phi(x_i) built from the
zero-energy scattering solution f is compared with the bare product state.

Run: python3 demos/correlated_ansatz.py
"""

from gplab.lattice import Field, Grid
from gplab.manybody import ManyBodyConfig, build_H, correlated_product_state, ground_state
from gplab.scattering import RadialPotential, solve_zero_energy

V = RadialPotential.square_well(2.0, 1.0)
sol = solve_zero_energy(V)
grid = Grid.cube(3, 4, 0.5)
phi = Field.constant(grid)
for N in (2, 3):
    H = build_H(ManyBodyConfig(grid, N, V))
    bare = H.expectation(H.basis.product_state(phi))
    corr = H.expectation(correlated_product_state(phi, sol, N, H.basis))
    line = f"N = {N}: bare {bare:.6f}  correlated {corr:.6f}"
    if H.dim <= 3000:
        line += f"  ground state {ground_state(H)[0]:.6f}"
    print(line)
