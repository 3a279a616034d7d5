"""Numerical toolkit for dilute Bose gases in the Gross-Pitaevskii regime.

Modules: :mod:`scattering` (zero-energy scattering), :mod:`gp` (GP ground
states and dynamics), :mod:`fock` (bosonic Fock space on lattices),
:mod:`renorm` (correlation kernel and renormalized excitation operators),
:mod:`manybody` (exact many-body Hamiltonians) and :mod:`cli`.
"""

from .lattice import Field, Grid
from .scattering import (RadialPotential, ScatteringError, ScatteringSolution,
                         integral_identity, scattering_length_variational, solve_zero_energy,
                         square_well_length)
from .gp import (GpError, GpParams, GpTrajectory, evolve_split_step, gp_energy, harmonic_trap,
                 minimize_imaginary_time)
from .fock import (DimensionCapError, FockBasis, ccr_defect, op_annihilate, op_create,
                   op_excitation_number, op_quadratic, projector_Q)
from .renorm import CorrelationKernel, RenormSystem, build_kernel
from .manybody import (ManyBodyConfig, build_H, correlated_product_state, depletion, evolve,
                       ground_state, reduced_density)

__version__ = "0.1.0"

__all__ = [
    "Field", "Grid",
    "RadialPotential", "ScatteringError", "ScatteringSolution", "integral_identity",
    "scattering_length_variational", "solve_zero_energy", "square_well_length",
    "GpError", "GpParams", "GpTrajectory", "evolve_split_step", "gp_energy", "harmonic_trap",
    "minimize_imaginary_time",
    "DimensionCapError", "FockBasis", "ccr_defect", "op_annihilate", "op_create",
    "op_excitation_number", "op_quadratic", "projector_Q",
    "CorrelationKernel", "RenormSystem", "build_kernel",
    "ManyBodyConfig", "build_H", "correlated_product_state", "depletion", "evolve",
    "ground_state", "reduced_density",
]
