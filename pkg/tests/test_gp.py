import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gplab.gp import (GpError, GpParams, chemical_potential, evolve_split_step, gp_energy,
                      gp_gradient, gp_rhs, gp_rhs_derivative, harmonic_trap,
                      minimize_imaginary_time, sobolev_norm, time_derivative)
from gplab.io import read_field, write_field
from gplab.lattice import Field, Grid


def test_params_reject_negative_coupling():
    with pytest.raises(ValueError, match="g >= 0"):
        GpParams(-1.0)
    assert GpParams.from_scattering_length(0.1).g == pytest.approx(0.8 * np.pi)


def test_energy_of_constant_state():
    g = Grid.cube(3, 4, 0.5)
    phi = Field.constant(g)
    e = gp_energy(phi, GpParams(2.0))
    assert e.kinetic == pytest.approx(0.0, abs=1e-14)
    assert e.interaction == pytest.approx(1.0 / g.volume)
    with pytest.raises(ValueError):
        gp_energy(phi * 2.0, GpParams(1.0))


def test_energy_of_gaussian_in_harmonic_trap():
    g = Grid.cube(1, 128, 0.1)
    phi = Field.gaussian(g, 1.0)
    e = gp_energy(phi, GpParams(0.0, harmonic_trap(g)))
    # one-dimensional oscillator ground state: kinetic = trap = 1/2
    assert e.kinetic == pytest.approx(0.5, abs=1e-10)
    assert e.trap == pytest.approx(0.5, abs=1e-10)


def test_minimizer_recovers_oscillator_from_a_poor_guess():
    g = Grid.cube(2, 32, 0.4)
    p = GpParams(0.0, harmonic_trap(g), confining=True)
    init = Field.gaussian(g, 1.7, center=[0.5, -0.3])
    gs = minimize_imaginary_time(p, init, tol=1e-9)
    assert gs.energy.total == pytest.approx(2.0, abs=1e-8)
    assert gs.mu == pytest.approx(2.0, abs=1e-8)
    assert np.all(np.diff(gs.energies) <= 1e-12)


def test_interacting_minimizer_euler_lagrange():
    g = Grid.cube(2, 32, 0.4)
    p = GpParams(5.0, harmonic_trap(g), confining=True)
    gs = minimize_imaginary_time(p, g, tol=1e-9)
    phi = gs.field
    rho = phi.density()
    quartic = g.cell_volume * np.sum(rho**2)
    # μ = E + (g/2)∫|φ|⁴ at a stationary point
    assert gs.mu == pytest.approx(gs.energy.total + 0.5 * p.g * quartic, abs=1e-10)
    assert gs.residual <= 1e-9
    # any other normalised trial has larger energy
    for w in (0.8, 1.0, 1.3):
        assert gp_energy(Field.gaussian(g, w), p).total >= gs.energy.total - 1e-12


def test_minimizer_warns_when_density_reaches_boundary():
    g = Grid.cube(1, 8, 0.5)
    p = GpParams(0.0, harmonic_trap(g, 0.3), confining=True)
    with pytest.warns(RuntimeWarning, match="boundary"):
        minimize_imaginary_time(p, g, tol=1e-8)


def test_gradient_orthogonal_to_state(rng):
    g = Grid.cube(2, 8, 0.5)
    phi = Field(rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), g).normalized()
    r = gp_gradient(phi, GpParams(3.0, harmonic_trap(g)))
    assert abs(phi.inner(r)) < 1e-12


def test_rhs_derivative_matches_finite_difference(rng):
    g = Grid.cube(1, 32, 0.3)
    p = GpParams(4.0, harmonic_trap(g))
    phi = Field.gaussian(g, 1.0) * np.exp(0.3j * g.axes()[0])
    dphi = gp_rhs(phi, p)
    exact = gp_rhs_derivative(phi, dphi, p).values
    for eps in (1e-4, 5e-5):
        fd = (gp_rhs(phi + eps * dphi, p).values - gp_rhs(phi - eps * dphi, p).values) / (2 * eps)
        assert np.max(np.abs(fd - exact)) < 1e-5 * np.max(np.abs(exact))


def test_plane_wave_phase_is_exact():
    g = Grid.cube(2, 16, 0.5)
    phi0 = Field.plane_wave(g, (1, 2))
    k2 = sum((2 * np.pi * m / L) ** 2 for m, L in zip((1, 2), g.lengths))
    traj = evolve_split_step(phi0, GpParams(0.0), 0.01, 100, sample_every=10)
    for t, s in zip(traj.times, traj.states):
        assert np.max(np.abs(s - np.exp(-1j * k2 * t) * phi0.values)) < 1e-12


def test_constant_state_with_interaction_rotates_uniformly():
    g = Grid.cube(3, 4, 0.5)
    phi0 = Field.constant(g)
    p = GpParams(3.0)
    traj = evolve_split_step(phi0, p, 0.01, 50)
    mu = p.g / g.volume
    assert np.allclose(traj.states[-1], np.exp(-1j * mu * 0.5) * phi0.values, atol=1e-13)


@pytest.mark.parametrize("order,expected", [(2, 2.0), (4, 4.0)])
def test_split_step_convergence_order(order, expected):
    g = Grid.cube(1, 64, 0.25)
    p = GpParams(10.0, harmonic_trap(g, 0.5))
    phi0 = (Field.gaussian(g, 1.2) * np.exp(0.5j * g.axes()[0])).normalized()
    T = 0.4
    ref = evolve_split_step(phi0, p, T / 1024, 1024, sample_every=1024, order=4).states[-1]
    errs = []
    for n in (16, 32, 64):
        s = evolve_split_step(phi0, p, T / n, n, sample_every=n, order=order).states[-1]
        errs.append(np.sqrt(g.cell_volume) * np.linalg.norm(s - ref))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert rates.min() > expected - 0.15


def test_evolution_conserves_mass_and_energy():
    g = Grid.cube(1, 256, 0.05)
    p = GpParams(2.0)
    phi0 = (Field.gaussian(g, 1.0) * np.exp(1j * g.axes()[0])).normalized()
    traj = evolve_split_step(phi0, p, 2e-3, 500, sample_every=50, order=4)
    obs = traj.observables()
    assert np.max(np.abs(obs["mass"] - 1)) < 1e-12
    assert np.max(np.abs(obs["e_total"] - obs["e_total"][0])) < 1e-8
    assert set(obs) == {"t", "mass", "e_kin", "e_int", "e_total", "h1", "h2", "h4"}


def test_time_derivative_routes_agree():
    g = Grid.cube(1, 64, 0.2)
    p = GpParams(3.0, harmonic_trap(g))
    phi0 = Field.gaussian(g, 0.9)
    errs = []
    for dt in (4e-3, 2e-3):
        traj = evolve_split_step(phi0, p, dt / 4, 40, sample_every=4, order=4)
        t = traj.times[5]
        exact = time_derivative(traj, 1, t).values
        fd = time_derivative(traj, 2, t).values
        errs.append(np.max(np.abs(exact - fd)))
    assert errs[0] / errs[1] > 3.6
    with pytest.raises(GpError):
        time_derivative(traj, 2, traj.times[0])
    with pytest.raises(GpError):
        traj.at(0.12345)


def test_sobolev_norms_ordered():
    g = Grid.cube(1, 64, 0.2)
    phi = Field.gaussian(g, 0.7)
    norms = [sobolev_norm(phi, m) for m in range(5)]
    assert norms[0] == pytest.approx(1.0)
    assert all(a <= b for a, b in zip(norms, norms[1:]))


def test_field_file_round_trip(tmp_path):
    g = Grid((2), (4, 8), 0.3)
    phi = Field(np.arange(32).reshape(4, 8) * (1 + 0.5j), g)
    write_field(phi, tmp_path / "phi.gpf")
    back = read_field(tmp_path / "phi.gpf")
    assert back.grid == g
    assert np.array_equal(back.values, phi.values)
    raw = (tmp_path / "phi.gpf").read_bytes()
    assert raw[:4] == b"GPF1"


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), coupling=st.floats(0.0, 50.0))
def test_energy_nonnegative_and_mu_relation(seed, coupling):
    rng = np.random.default_rng(seed)
    g = Grid.cube(2, 8, 0.5)
    phi = Field(rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), g).normalized()
    p = GpParams(coupling, harmonic_trap(g))
    e = gp_energy(phi, p)
    assert min(e.kinetic, e.trap, e.interaction) >= 0
    quartic = g.cell_volume * np.sum(phi.density() ** 2)
    assert chemical_potential(phi, p) == pytest.approx(e.total + 0.5 * coupling * quartic, rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_split_step_is_unitary_property(seed):
    rng = np.random.default_rng(seed)
    g = Grid.cube(1, 32, 0.3)
    phi = Field(rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), g).normalized()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        traj = evolve_split_step(phi, GpParams(float(rng.uniform(0, 5))), 1e-3, 50, sample_every=50)
    assert Field(traj.states[-1], g).norm() == pytest.approx(1.0, abs=1e-13)
