"""Gross-Pitaevskii energy, ground states and real-time dynamics on a torus.

Conventions: ``E(φ) = ∫ |∇φ|² + V_ext |φ|² + (g/2)|φ|⁴`` with ``g = 8π a`` and
``i ∂_t φ = (-Δ + V_ext + g|φ|²) φ``.  Kinetic terms are spectral.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .lattice import Field, Grid

__all__ = [
    "GpParams",
    "EnergyBreakdown",
    "GroundState",
    "GpTrajectory",
    "GpError",
    "gp_energy",
    "gp_gradient",
    "chemical_potential",
    "minimize_imaginary_time",
    "evolve_split_step",
    "sobolev_norm",
    "time_derivative",
    "gp_rhs",
    "gp_rhs_derivative",
    "harmonic_trap",
]

NORM_TOL = 1e-8


class GpError(RuntimeError):
    """Raised on stagnation, instability or misuse of a trajectory."""


@dataclass(frozen=True)
class GpParams:
    """Coupling ``g`` and optional real external trap sampled on the grid."""

    g: float
    trap: np.ndarray | None = None
    confining: bool = False

    def __post_init__(self):
        if not np.isfinite(self.g) or self.g < 0:
            raise ValueError(f"coupling g must satisfy g >= 0, got {self.g}")
        if self.trap is not None:
            trap = np.asarray(self.trap, dtype=float)
            if not np.all(np.isfinite(trap)):
                raise ValueError("trap samples must be finite")
            object.__setattr__(self, "trap", trap)

    @classmethod
    def from_scattering_length(cls, a: float, trap=None, confining=False) -> "GpParams":
        return cls(8 * np.pi * a, trap, confining)

    def released(self) -> "GpParams":
        """Same coupling with the trap switched off."""
        return GpParams(self.g)

    def potential(self, grid: Grid) -> np.ndarray | float:
        if self.trap is None:
            return 0.0
        if self.trap.shape != grid.shape:
            raise ValueError("trap does not match the field's grid")
        return self.trap


def harmonic_trap(grid: Grid, omega: float = 1.0) -> np.ndarray:
    """``omega² |x|²`` sampled on the grid (minimum at the origin)."""
    return omega**2 * grid.r2()


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    trap: float
    interaction: float

    @property
    def total(self) -> float:
        return self.kinetic + self.trap + self.interaction

    def as_dict(self) -> dict:
        return {"kinetic": self.kinetic, "trap": self.trap,
                "interaction": self.interaction, "total": self.total}


def _check_normalized(phi: Field):
    n = phi.norm()
    if abs(n - 1) > NORM_TOL:
        raise ValueError(f"field is not normalised (norm = {n:.12g})")


def _kinetic(phi: Field) -> float:
    grid = phi.grid
    hat = np.fft.fftn(phi.values)
    # Parseval: h^d Σ|∇φ|² = (h^d / M) Σ |k|² |φ̂|²
    return float(grid.cell_volume / grid.size * np.sum(grid.k2 * np.abs(hat) ** 2))


def gp_energy(phi: Field, p: GpParams, check_norm: bool = True) -> EnergyBreakdown:
    if check_norm:
        _check_normalized(phi)
    grid = phi.grid
    rho = phi.density()
    trap = float(grid.cell_volume * np.sum(p.potential(grid) * rho)) if p.trap is not None else 0.0
    inter = float(0.5 * p.g * grid.cell_volume * np.sum(rho**2))
    return EnergyBreakdown(_kinetic(phi), trap, inter)


def _apply_h(phi: Field, p: GpParams) -> np.ndarray:
    """Mean-field Hamiltonian ``(-Δ + V_ext + g|φ|²) φ`` as site values."""
    grid = phi.grid
    v = p.potential(grid) + p.g * phi.density()
    return grid.minus_laplacian(phi.values) + v * phi.values


def chemical_potential(phi: Field, p: GpParams) -> float:
    hphi = _apply_h(phi, p)
    return float(np.real(phi.grid.cell_volume * np.vdot(phi.values, hphi)))


def gp_gradient(phi: Field, p: GpParams) -> Field:
    """Residual ``(-Δ + V_ext + g|φ|²)φ - μφ`` with ``μ`` the Rayleigh quotient.

    ``μ`` is taken relative to ``‖φ‖²`` so that the residual is orthogonal
    to ``φ`` for any nonzero input.
    """
    hphi = _apply_h(phi, p)
    w = phi.grid.cell_volume
    mu = np.real(w * np.vdot(phi.values, hphi)) / (w * np.vdot(phi.values, phi.values).real)
    return Field(hphi - mu * phi.values, phi.grid)


def gp_rhs(phi: Field, p: GpParams) -> Field:
    """``∂_t φ = -i(-Δ + V_ext + g|φ|²)φ``."""
    return Field(-1j * _apply_h(phi, p), phi.grid)


def gp_rhs_derivative(phi: Field, dphi: Field, p: GpParams) -> Field:
    """``∂_t² φ`` from ``φ`` and ``∂_t φ`` by differentiating the GP equation."""
    grid = phi.grid
    v = p.potential(grid) + 2 * p.g * phi.density()
    lin = grid.minus_laplacian(dphi.values) + v * dphi.values
    lin = lin + p.g * phi.values**2 * np.conj(dphi.values)
    return Field(-1j * lin, grid)


@dataclass
class GroundState:
    field: Field
    energy: EnergyBreakdown
    mu: float
    residual: float
    iterations: int
    energies: np.ndarray
    boundary_density: float

    @property
    def interaction_term(self) -> float:
        return self.energy.interaction


def _initial_guess(grid: Grid, p: GpParams) -> Field:
    if p.trap is None:
        return Field.constant(grid)
    center = grid.positions[int(np.argmin(p.trap))]
    return Field.gaussian(grid, width=1.0, center=center)


def minimize_imaginary_time(p: GpParams, init: Field | Grid, dtau: float | None = None,
                            tol: float = 1e-8, max_iter: int = 20_000,
                            dtau_min: float = 1e-14, precondition: bool = True) -> GroundState:
    """Minimise the GP functional by a projected gradient flow on the unit sphere.

    The descent direction is the Fourier-preconditioned residual
    ``(s + |k|²)^{-1} r`` projected onto the tangent space of the sphere,
    combined with the previous direction by a Polak-Ribière update.  Each
    step ``φ <- normalise(φ + τ d)`` uses a secant line search on the
    directional derivative seeded with ``dτ``; a step is accepted only if
    the energy does not increase beyond roundoff, otherwise ``dτ`` is halved.  The preconditioner leaves the fixed points
    (solutions of the Euler-Lagrange equation) unchanged.
    """
    if isinstance(init, Grid):
        init = _initial_guess(init, p)
    grid = init.grid
    phi = init.normalized()
    w = grid.cell_volume
    trap_max = float(np.max(p.potential(grid))) if p.trap is not None else 0.0
    shift = 1.0 + (max(float(np.min(p.trap)), 0.0) if p.trap is not None else 0.0)
    if precondition:
        precond = 1.0 / (shift + grid.k2)
        stiff = 1.0 + (trap_max + p.g * float(np.max(phi.density()))) / shift
    else:
        precond = np.ones(grid.shape)
        stiff = grid.k2_max + trap_max + p.g * float(np.max(phi.density()))
    if dtau is None:
        dtau = 1.0 / stiff
    if dtau <= 0:
        raise ValueError("dtau must be positive")

    def inner(a, b):
        return float(np.real(w * np.vdot(a, b)))

    def tangent(x):
        return x - inner(phi.values, x) * phi.values - 1j * inner(1j * phi.values, x) * phi.values

    def energy_along(d, tau):
        trial = Field(phi.values + tau * d, grid).normalized()
        return trial, gp_energy(trial, p).total

    energy = gp_energy(phi, p).total
    energies = [energy]
    slack = 1e-13
    res = gp_gradient(phi, p).values
    rnorm = np.sqrt(inner(res, res))
    pres = np.fft.ifftn(precond * np.fft.fftn(res))
    d_prev = None
    rp_prev = None
    it = 0
    while rnorm > tol:
        if it >= max_iter:
            raise GpError(f"imaginary-time flow stagnated: residual {rnorm:.3e} > {tol:.1e} "
                          f"after {max_iter} iterations")
        rp = inner(res, pres)
        d = -tangent(pres)
        if d_prev is not None:
            beta = max(0.0, (rp - inner(res, pres_prev)) / rp_prev)
            d = d + beta * tangent(d_prev)
        slope = 2 * inner(res, d)
        if slope >= 0:
            d = -tangent(pres)
            slope = 2 * inner(res, d)
        accepted = None
        while accepted is None:
            trial1, e1 = energy_along(d, dtau)
            # secant on the directional derivative; accurate where energy
            # differences are already at roundoff level
            slope1 = 2 * inner(gp_gradient(trial1, p).values, d)
            curv = (slope1 - slope) / dtau
            candidates = [(e1, trial1, dtau)]
            if curv > 0:
                tau_star = min(-slope / curv, 8 * dtau)
                trial2, e2 = energy_along(d, tau_star)
                candidates.append((e2, trial2, tau_star))
            e_best, trial_best, tau_best = min(candidates, key=lambda c: c[0])
            if curv > 0 and len(candidates) == 2 and e_best > energy:
                # at roundoff level prefer the derivative-based step
                if candidates[1][0] <= energy + slack * max(1.0, abs(energy)):
                    e_best, trial_best, tau_best = candidates[1]
            if e_best <= energy + slack * max(1.0, abs(energy)):
                accepted = (trial_best, e_best, tau_best)
            else:
                dtau *= 0.5
                if dtau < dtau_min:
                    raise GpError(f"step size fell below {dtau_min:g} with residual {rnorm:.3e}")
        phi, energy, dtau = accepted
        energies.append(energy)
        d_prev, rp_prev, pres_prev = d, rp, pres
        res = gp_gradient(phi, p).values
        rnorm = np.sqrt(inner(res, res))
        pres = np.fft.ifftn(precond * np.fft.fftn(res))
        it += 1

    phi = _fix_phase(phi)
    bd = float(np.max(np.abs(phi.values[grid.boundary_mask()]))) if grid.size > 1 else 0.0
    if p.trap is not None and bd > 1e-6:
        warnings.warn(f"minimiser density reaches the box boundary (max |φ| = {bd:.2e}); "
                      "enlarge the box", RuntimeWarning, stacklevel=2)
    return GroundState(phi, gp_energy(phi, p), chemical_potential(phi, p),
                       gp_gradient(phi, p).norm(), it, np.array(energies), bd)


def _fix_phase(phi: Field) -> Field:
    v = phi.values
    j = np.argmax(np.abs(v))
    phase = v.flat[j] / abs(v.flat[j])
    v = v / phase
    return Field(v, phi.grid)


# real-time dynamics ------------------------------------------------------

_YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSHIDA_W0 = 1.0 - 2.0 * _YOSHIDA_W1


@dataclass
class GpTrajectory:
    """Uniformly sampled solution ``φ_t`` of the time-dependent GP equation."""

    grid: Grid
    params: GpParams
    times: np.ndarray
    states: np.ndarray
    dt: float
    sample_dt: float
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def field(self, i: int) -> Field:
        return Field(self.states[i], self.grid)

    def index(self, t: float) -> int:
        i = int(round((t - self.times[0]) / self.sample_dt))
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise GpError(f"time {t} is not a sample of the trajectory "
                          f"[{self.times[0]}, {self.times[-1]}]")
        return i

    def at(self, t: float) -> Field:
        return self.field(self.index(t))

    def observables(self) -> dict[str, np.ndarray]:
        """Columns ``t, mass, e_kin, e_int, e_total, h1, h2, h4``."""
        rows = {k: [] for k in ("t", "mass", "e_kin", "e_int", "e_total", "h1", "h2", "h4")}
        for i, t in enumerate(self.times):
            phi = self.field(i)
            e = gp_energy(phi, self.params, check_norm=False)
            rows["t"].append(t)
            rows["mass"].append(phi.norm() ** 2)
            rows["e_kin"].append(e.kinetic)
            rows["e_int"].append(e.interaction)
            rows["e_total"].append(e.total)
            for m in (1, 2, 4):
                rows[f"h{m}"].append(sobolev_norm(phi, m))
        return {k: np.asarray(v) for k, v in rows.items()}


def evolve_split_step(phi0: Field, p: GpParams, dt: float, n_steps: int,
                      sample_every: int = 1, order: int = 2,
                      t0: float = 0.0) -> GpTrajectory:
    """Propagate ``i∂_tφ = (-Δ + V_ext + g|φ|²)φ`` by Strang splitting.

    ``order=4`` composes three Strang steps with Yoshida weights.  The
    potential sub-step is exact because ``|φ|`` is constant along it.
    Records every ``sample_every``-th state, including the initial one.
    """
    _check_normalized(phi0)
    if order not in (2, 4):
        raise ValueError("split-step order must be 2 or 4")
    if dt <= 0 or n_steps < 0 or sample_every < 1:
        raise ValueError("need dt > 0, n_steps >= 0, sample_every >= 1")
    grid = phi0.grid
    vext = p.potential(grid)
    k2 = grid.k2
    weights = [1.0] if order == 2 else [_YOSHIDA_W1, _YOSHIDA_W0, _YOSHIDA_W1]
    kin = [np.exp(-1j * w * dt * k2) for w in weights]

    def strang(psi, w, kprop):
        psi = psi * np.exp(-0.5j * w * dt * (vext + p.g * np.abs(psi) ** 2))
        psi = np.fft.ifftn(kprop * np.fft.fftn(psi))
        return psi * np.exp(-0.5j * w * dt * (vext + p.g * np.abs(psi) ** 2))

    psi = phi0.values.copy()
    mass0 = float(grid.cell_volume * np.sum(np.abs(psi) ** 2))
    states = [psi.copy()]
    times = [t0]
    for step in range(1, n_steps + 1):
        for w, kprop in zip(weights, kin):
            psi = strang(psi, w, kprop)
        if (step % sample_every == 0) or step == n_steps:
            mass = float(grid.cell_volume * np.sum(np.abs(psi) ** 2))
            if not np.isfinite(mass) or abs(mass - mass0) > 1e-6:
                raise GpError(f"split-step instability at step {step}: mass drift {mass - mass0:.3e}")
            if step % sample_every == 0:
                states.append(psi.copy())
                times.append(t0 + step * dt)
    return GpTrajectory(grid, p, np.array(times), np.array(states), dt, dt * sample_every,
                        {"order": order})


def sobolev_norm(phi: Field, m: int) -> float:
    """``(Σ (1+|k|²)^m |φ̂(k)|²)^{1/2}`` with the L² normalisation of ``φ``."""
    if m < 0 or m > 4:
        raise ValueError("Sobolev index must satisfy 0 <= m <= 4")
    grid = phi.grid
    hat = np.fft.fftn(phi.values)
    return float(np.sqrt(grid.cell_volume / grid.size * np.sum((1 + grid.k2) ** m * np.abs(hat) ** 2)))


def time_derivative(traj: GpTrajectory, order: int, t: float) -> Field:
    """``∂_t φ_t`` along a trajectory.

    ``order=1`` evaluates the GP right-hand side exactly at the sample;
    ``order=2`` is the centred difference of neighbouring samples, which
    agrees with the exact value up to ``O(Δt²)``.
    """
    i = traj.index(t)
    if order == 1:
        return gp_rhs(traj.field(i), traj.params)
    if order == 2:
        if i == 0 or i == len(traj) - 1:
            raise GpError(f"centred difference needs neighbours of t = {t}")
        return Field((traj.states[i + 1] - traj.states[i - 1]) / (2 * traj.sample_dt), traj.grid)
    raise ValueError("order must be 1 (exact) or 2 (finite difference)")
