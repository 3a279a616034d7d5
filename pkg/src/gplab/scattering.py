"""Zero-energy s-wave scattering for radial, compactly supported potentials.

The scattering solution ``f`` solves ``-2 Δf + V f = 0`` with ``f -> 1`` at
infinity.  Writing ``u(r) = r f(r)`` turns this into the regular ODE
``u'' = (V/2) u`` with ``u(0) = 0``; outside the support ``u`` is affine,
``u(r) = r - a``, and ``a`` is the scattering length.

Three independent routes to ``a`` are provided:

* :func:`solve_zero_energy` -- outward RK4 integration and an affine fit of
  the asymptote,
* :func:`scattering_length_variational` -- minimisation of the energy
  functional ``∫ 2|∇f|² + V|f|²`` over explicit trial families,
* :func:`integral_identity` -- ``∫ V f dx / (8π)`` evaluated on a solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

__all__ = [
    "RadialPotential",
    "ScatteringSolution",
    "ScatteringError",
    "square_well_length",
    "solve_zero_energy",
    "scattering_length_variational",
    "integral_identity",
    "asymptote_residual",
]


class ScatteringError(ValueError):
    """Raised for invalid potentials or a failed outward integration."""


def square_well_length(depth: float, radius: float) -> float:
    """Closed-form scattering length of ``V = depth`` on ``r <= radius``.

    Inside the well ``u = sinh(κ r)`` with ``κ = sqrt(depth / 2)``; matching
    value and slope to ``r - a`` at the edge gives ``a = R - tanh(κR)/κ``.
    """
    if depth < 0 or radius < 0:
        raise ValueError("square well needs non-negative depth and radius")
    if depth == 0 or radius == 0:
        return 0.0
    kappa = np.sqrt(depth / 2.0)
    return float(radius - np.tanh(kappa * radius) / kappa)


@dataclass(frozen=True)
class RadialPotential:
    """Non-negative radial potential sampled on ``r_i = i * dr``.

    ``support_radius`` must be a grid node; samples beyond it are zero.
    Between nodes the potential is a cubic spline through the samples on
    ``[0, R]`` and identically zero for ``r > R``, so a potential with a jump
    at the edge (the square well) is represented exactly.
    """

    samples: np.ndarray
    dr: float
    support_radius: float
    _spline: CubicSpline | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size < 2:
            raise ScatteringError("potential needs at least two radial samples")
        if self.dr <= 0:
            raise ScatteringError("radial spacing must be positive")
        if np.any(samples < 0):
            raise ScatteringError("potential samples must be non-negative")
        n_support = self.support_radius / self.dr
        if abs(n_support - round(n_support)) > 1e-9 * max(1.0, n_support):
            raise ScatteringError("support radius must lie on a grid node")
        n_support = int(round(n_support))
        if n_support >= samples.size:
            raise ScatteringError("samples must extend beyond the support radius")
        if np.any(samples[n_support + 1:] != 0):
            raise ScatteringError("samples must vanish beyond the support radius")
        object.__setattr__(self, "samples", samples)
        spline = None
        if n_support >= 1:
            r = self.dr * np.arange(n_support + 1)
            # A spline needs at least two nodes; one cell is handled linearly.
            spline = CubicSpline(r, samples[: n_support + 1], bc_type="not-a-knot") \
                if n_support >= 3 else None
        object.__setattr__(self, "_spline", spline)

    # constructors -----------------------------------------------------

    @classmethod
    def from_function(cls, func, support_radius: float, dr: float,
                      r_max: float | None = None) -> "RadialPotential":
        """Sample ``func`` on a grid whose nodes include ``support_radius``.

        ``dr`` is shrunk to the nearest value that puts the support edge on
        a node.  ``func`` is evaluated on ``[0, R]`` (closed) so a jump at
        ``R`` keeps its inner value.
        """
        if support_radius <= 0:
            r_max = r_max or 1.0
            n = max(int(np.ceil(r_max / dr)), 2)
            return cls(np.zeros(n + 1), r_max / n, 0.0)
        n_support = max(int(np.ceil(support_radius / dr - 1e-12)), 1)
        dr = support_radius / n_support
        r_max = support_radius * 2 if r_max is None else max(r_max, support_radius)
        n = max(int(np.ceil(r_max / dr - 1e-12)), n_support + 1)
        r = dr * np.arange(n + 1)
        samples = np.zeros(n + 1)
        samples[: n_support + 1] = np.asarray(func(r[: n_support + 1]), dtype=float)
        return cls(samples, dr, support_radius)

    @classmethod
    def square_well(cls, depth: float, radius: float, dr: float = 1e-3) -> "RadialPotential":
        return cls.from_function(lambda r: np.full_like(r, depth), radius, dr)

    @classmethod
    def from_table(cls, path: str | Path) -> "RadialPotential":
        """Read a two-column ``r V(r)`` text table on a uniform grid from 0."""
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 2:
            raise ScatteringError(f"{path}: expected two columns (r, V)")
        r, v = data[:, 0], data[:, 1]
        if abs(r[0]) > 1e-12:
            raise ScatteringError(f"{path}: radial grid must start at r = 0")
        steps = np.diff(r)
        dr = float(steps.mean())
        if np.any(np.abs(steps - dr) > 1e-8 * max(dr, 1.0)):
            raise ScatteringError(f"{path}: radial grid must be uniform")
        nonzero = np.flatnonzero(v)
        support = float(r[nonzero[-1]]) if nonzero.size else 0.0
        if nonzero.size and nonzero[-1] == r.size - 1:
            # Table ends inside the support; append one zero node.
            r = np.append(r, r[-1] + dr)
            v = np.append(v, 0.0)
        return cls(v, dr, round(support / dr) * dr)

    # evaluation -------------------------------------------------------

    @property
    def n_support(self) -> int:
        return int(round(self.support_radius / self.dr))

    @property
    def radii(self) -> np.ndarray:
        return self.dr * np.arange(self.samples.size)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = r <= self.support_radius * (1 + 1e-14)
        if not np.any(inside):
            return out
        if self._spline is not None:
            out[inside] = self._spline(np.clip(r[inside], 0.0, self.support_radius))
        else:
            rs = self.radii[: self.n_support + 1]
            out[inside] = np.interp(r[inside], rs, self.samples[: self.n_support + 1])
        return np.maximum(out, 0.0)

    def l1_norm(self) -> float:
        """``∫ V dx = 4π ∫ V(r) r² dr`` by Simpson's rule on the support."""
        if self.n_support == 0:
            return 0.0
        r = self.radii[: self.n_support + 1]
        return float(4 * np.pi * _simpson(self.samples[: self.n_support + 1] * r**2, self.dr))

    def scaled(self, n: float) -> "RadialPotential":
        """The potential ``n² V(n r)`` on the grid contracted by ``n``."""
        return RadialPotential(self.samples * n**2, self.dr / n, self.support_radius / n)

    def with_extent(self, r_max: float) -> "RadialPotential":
        """Same potential with the zero tail padded out to at least ``r_max``."""
        n = int(np.ceil(r_max / self.dr - 1e-9))
        if n + 1 <= self.samples.size:
            return self
        samples = np.zeros(n + 1)
        samples[: self.samples.size] = self.samples
        return RadialPotential(samples, self.dr, self.support_radius)


@dataclass(frozen=True)
class ScatteringSolution:
    """Scattering solution ``f`` and ``u = r f`` on the potential's grid."""

    r: np.ndarray
    f_samples: np.ndarray
    u_samples: np.ndarray
    a: float
    potential: RadialPotential

    @property
    def support_radius(self) -> float:
        return self.potential.support_radius

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, r):
        """Evaluate ``f`` at arbitrary radii.

        Uses a cubic spline inside the grid and the exact tail ``1 - a/r``
        beyond the support (where it is analytic).
        """
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        outside = r > self.support_radius
        out[outside] = 1.0 - self.a / r[outside]
        if np.any(~outside):
            spline = _cached_spline(self)
            out[~outside] = spline(r[~outside])
        return np.clip(out, 0.0, 1.0)

    def derivative(self, r):
        """``f'(r)``; analytic ``a/r²`` outside the support."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        outside = r > self.support_radius
        out[outside] = self.a / r[outside] ** 2
        if np.any(~outside):
            out[~outside] = _cached_spline(self)(r[~outside], 1)
        return out


_SPLINES: dict[int, CubicSpline] = {}


def _cached_spline(sol: ScatteringSolution) -> CubicSpline:
    key = id(sol)
    spline = _SPLINES.get(key)
    if spline is None or spline.x[-1] != sol.r[-1]:
        spline = CubicSpline(sol.r, sol.f_samples)
        if len(_SPLINES) > 64:
            _SPLINES.clear()
        _SPLINES[key] = spline
    return spline


def _simpson(y: np.ndarray, dx: float) -> float:
    """Composite Simpson on a uniform grid (trapezoid correction if even)."""
    n = y.size
    if n < 3:
        return float(np.trapezoid(y, dx=dx))
    if n % 2 == 1:
        return float(dx / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum()))
    # even number of points: Simpson on the first n-3 intervals + 3/8 rule
    head = _simpson(y[: n - 3], dx)
    tail = 3 * dx / 8 * (y[-4] + 3 * y[-3] + 3 * y[-2] + y[-1])
    return head + tail


def solve_zero_energy(V: RadialPotential, r_max: float | None = None,
                      tol: float = 1e-10) -> ScatteringSolution:
    """Integrate ``u'' = (V/2) u`` outward from ``u(0)=0, u'(0)=1``.

    The solution is rescaled so that the outer asymptote reads
    ``u = r - a``; ``a`` comes from a least-squares affine fit on the outer
    third of ``(R, r_max]``.  RK4 evaluates ``V`` at half nodes through the
    potential's interpolant, which keeps the scheme fourth order.
    """
    if tol <= 0:
        raise ScatteringError("tolerance must be positive")
    R = V.support_radius
    if r_max is None:
        r_max = max(3.0 * R, V.radii[-1], 1.0)
    if R > 0 and r_max <= 2 * R:
        raise ScatteringError(f"r_max = {r_max} must exceed twice the support radius {R}")
    V = V.with_extent(r_max)
    r = V.radii
    r = r[r <= r_max * (1 + 1e-12)]
    n = r.size
    if n < 4:
        raise ScatteringError("radial grid too coarse for the requested r_max")

    if R == 0 or V.l1_norm() == 0:
        u = r.copy()
        return ScatteringSolution(r, np.ones_like(r), u, 0.0, V)

    h = V.dr
    half = V(r[:-1] + h / 2) / 2.0
    node = V(r) / 2.0
    u = np.empty(n)
    du = np.empty(n)
    u[0], du[0] = 0.0, 1.0
    ui, pi = 0.0, 1.0
    nR = V.n_support
    for i in range(n - 1):
        if i >= nR:
            # free region: the solution is exactly affine
            u[i + 1:] = ui + pi * (r[i + 1:] - r[i])
            du[i + 1:] = pi
            break
        q0, qh, q1 = node[i], half[i], node[i + 1]
        if i + 1 == nR:
            q1 = V.samples[nR] / 2.0
        k1u, k1p = pi, q0 * ui
        k2u, k2p = pi + h / 2 * k1p, qh * (ui + h / 2 * k1u)
        k3u, k3p = pi + h / 2 * k2p, qh * (ui + h / 2 * k2u)
        k4u, k4p = pi + h * k3p, q1 * (ui + h * k3u)
        ui = ui + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        pi = pi + h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        u[i + 1], du[i + 1] = ui, pi
        if not (np.isfinite(ui) and np.isfinite(pi)):
            raise ScatteringError("outward integration overflowed; reduce depth or dr")

    outer = r > R
    if not np.any(outer):
        raise ScatteringError("empty asymptotic region")
    r_out = r[outer]
    third = r_out >= r_out[0] + 2.0 * (r_out[-1] - r_out[0]) / 3.0
    if third.sum() < 2:
        third = np.ones_like(r_out, dtype=bool)
    slope, intercept = np.polyfit(r_out[third], u[outer][third], 1)
    if not np.isfinite(slope) or slope <= 0:
        raise ScatteringError("outward integration failed to reach an affine asymptote")
    u = u / slope
    a = -intercept / slope
    f = np.empty_like(u)
    f[1:] = u[1:] / r[1:]
    f[0] = 1.0 / slope
    return ScatteringSolution(r, f, u, float(a), V)


def integral_identity(sol: ScatteringSolution) -> float:
    """``(1/8π) ∫ V f dx``, which equals ``a`` for an exact solution."""
    V = sol.potential
    nR = V.n_support
    if nR == 0:
        return 0.0
    r = sol.r[: nR + 1]
    integrand = V.samples[: nR + 1] * sol.u_samples[: nR + 1] * r
    return float(4 * np.pi * _simpson(integrand, V.dr) / (8 * np.pi))


def asymptote_residual(sol: ScatteringSolution) -> float:
    """Max of ``|f(r) - (1 - a/r)|`` over grid points with ``r > R``."""
    outer = sol.r > sol.support_radius
    if not np.any(outer):
        raise ScatteringError("empty asymptotic region")
    r = sol.r[outer]
    return float(np.max(np.abs(sol.f_samples[outer] - (1.0 - sol.a / r))))


# variational route -----------------------------------------------------

def _energy(V: RadialPotential, f, df, breaks, tail_a: float, r_tail: float) -> float:
    """``4π ∫_0^∞ (2 f'² + V f²) r² dr`` for ``f = 1 - tail_a/r`` past ``r_tail``."""
    R = V.support_radius
    upper = max(r_tail, R)
    pts = sorted({b for b in breaks if 0 < b < upper})
    edges = [0.0, *pts, upper]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 0:
            continue
        val, _ = integrate.quad(
            lambda r: (2 * df(r) ** 2 + V(r) * f(r) ** 2) * r**2,
            lo, hi, limit=200, epsabs=1e-13, epsrel=1e-12,
        )
        total += val
    # kinetic tail of 1 - a/r is ∫ 2 a² / r² dr; V vanishes there
    total += 2 * tail_a**2 / upper
    return 4 * np.pi * total


def _well_family(c: float, R: float):
    """Square-well profile with inner wave number ``c`` matched C¹ at ``R``."""
    c = max(c, 1e-9)
    ch = np.cosh(c * R)
    a_c = R - np.tanh(c * R) / c

    def f(r):
        r = np.asarray(r, dtype=float)
        inner = np.where(r > 0, np.sinh(c * r) / (np.maximum(r, 1e-300) * c * ch), 1.0 / ch)
        return np.where(r <= R, inner, 1.0 - a_c / np.maximum(r, 1e-300))

    def df(r):
        r = np.asarray(r, dtype=float)
        rr = np.maximum(r, 1e-12)
        inner = (c * rr * np.cosh(c * rr) - np.sinh(c * rr)) / (c * ch * rr**2)
        return np.where(r <= R, inner, a_c / rr**2)

    return f, df, a_c


def _cutoff_family(b: float, r0: float):
    def f(r):
        return 1.0 - b / np.maximum(np.asarray(r, dtype=float), r0)

    def df(r):
        r = np.asarray(r, dtype=float)
        return np.where(r > r0, b / np.maximum(r, r0) ** 2, 0.0)

    return f, df


def scattering_length_variational(V: RadialPotential, trial_family_size: int = 2) -> float:
    """Upper bound on ``a`` from minimising the energy over trial profiles.

    Two families are searched: the C¹ square-well shape
    ``sinh(c r) / (r c cosh(cR))`` joined to ``1 - a_c/r`` (exact for a
    square well at ``c = sqrt(V0/2)``), and the hard cut-off profile
    ``1 - b / max(r, r0)``.  ``trial_family_size`` selects how many of the
    families (1 or 2) are used.  Returns ``min energy / 8π``.
    """
    R = V.support_radius
    if R == 0 or V.l1_norm() == 0:
        return 0.0
    vmax = float(V.samples.max())

    def well_energy(c):
        f, df, a_c = _well_family(c, R)
        return _energy(V, f, df, [R], a_c, R)

    c_hi = 4.0 * np.sqrt(vmax / 2.0) + 4.0 / R
    grid = np.linspace(1e-6, c_hi, 41)
    vals = [well_energy(c) for c in grid]
    j = int(np.argmin(vals))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid.size - 1)]
    res = optimize.minimize_scalar(well_energy, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    best = min(res.fun, vals[j])
    # f ≡ 1 (c -> 0) is always admissible
    best = min(best, V.l1_norm())

    if trial_family_size >= 2:
        def cutoff_energy(p):
            b, r0 = p
            r0 = float(np.clip(r0, 1e-6 * R, 4 * R))
            b = float(np.clip(b, 0.0, r0))
            f, df = _cutoff_family(b, r0)
            return _energy(V, f, df, [r0, R], b, max(r0, R))

        x0 = [0.5 * min(best / (8 * np.pi), R), R]
        res2 = optimize.minimize(cutoff_energy, x0, method="Nelder-Mead",
                                 options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
        best = min(best, float(res2.fun))
    return float(best / (8 * np.pi))
