"""Gross-Pitaevskii ground state in a harmonic trap, then real-time evolution.

Run: python3 demos/gp_groundstate_and_dynamics.py
"""

import numpy as np

from gplab.gp import GpParams, evolve_split_step, harmonic_trap, minimize_imaginary_time
from gplab.lattice import Field, Grid
from gplab.scattering import RadialPotential, solve_zero_energy

grid = Grid.cube(2, 64, 0.25)
a = solve_zero_energy(RadialPotential.square_well(2.0, 1.0)).a
trap = harmonic_trap(grid)

for g in (0.0, 8 * np.pi * a):
    gs = minimize_imaginary_time(GpParams(g, trap, confining=True), grid, tol=1e-9)
    print(f"g = {g:6.3f}: E = {gs.energy.total:.8f}  mu = {gs.mu:.8f}  "
          f"iterations = {len(gs.energies)}")

# release the interacting condensate from the trap and follow the conserved quantities
params = GpParams(8 * np.pi * a)
traj = evolve_split_step(gs.field, params, 2e-3, 500, sample_every=50, order=4)
obs = traj.observables()
for t, m, e, k in zip(obs["t"], obs["mass"], obs["e_total"], obs["e_kin"]):
    print(f"t = {t:4.2f}  mass - 1 = {m - 1:+.1e}  energy = {e:.10f}  kinetic = {k:.6f}")

# a plane wave only picks up the phase exp(-i |k|^2 t)
pw = Field.plane_wave(grid, (1, 0))
out = evolve_split_step(pw, GpParams(0.0), 0.01, 100, sample_every=100).states[-1]
k2 = (2 * np.pi / grid.lengths[0]) ** 2
print("plane-wave phase error:", np.max(np.abs(out - np.exp(-1j * k2) * pw.values)))
