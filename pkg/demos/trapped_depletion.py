"""Condensate depletion of trapped ground states against the GP minimiser.

One-dimensional testbed with a mean-field scaled pair potential: the
product N * depletion should stay roughly constant in N, and the depletion
should grow with the interaction strength.

Run: python3 demos/trapped_depletion.py   (about half a minute)
"""

from gplab.gp import harmonic_trap
from gplab.lattice import Grid
from gplab.manybody import trapped_depletion_experiment
from gplab.scattering import RadialPotential

grid = Grid.cube(1, 32, 0.4)
rows = trapped_depletion_experiment(grid, RadialPotential.square_well(1.0, 0.1), (2, 3, 4),
                                    harmonic_trap(grid), strengths=(0.25, 0.5, 1.0),
                                    sampling="cell_average", scaling="mean-field")
print(f"{'N':>2} {'strength':>8} {'depletion':>11} {'N*depletion':>12} {'route gap':>10}")
for r in rows:
    print(f"{r['N']:>2} {r['strength']:>8.2f} {r['depletion']:>11.3e} "
          f"{r['n_depletion']:>12.3e} {r['identity_defect']:>10.1e}")
