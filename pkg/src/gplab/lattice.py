"""Periodic lattices and complex fields on them.

Sites sit at centred coordinates ``x_i = (i - n/2) h`` on each axis, so the
origin is a lattice point and the torus spans ``[-L/2, L/2)``.  Fields are
stored as function values; the orthonormal site basis used by the Fock-space
code carries the weight ``h^{d/2}`` (:meth:`Field.coefficients`).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["Grid", "Field"]


@dataclass(frozen=True)
class Grid:
    """Periodic ``dim``-dimensional grid with uniform spacing ``h``."""

    dim: int
    points: tuple[int, ...]
    h: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("grid dimension must be 1, 2 or 3")
        pts = (self.points,) * self.dim if np.isscalar(self.points) else tuple(self.points)
        if len(pts) != self.dim:
            raise ValueError(f"need {self.dim} axis sizes, got {len(pts)}")
        for n in pts:
            n = int(n)
            if n < 1 or n & (n - 1):
                raise ValueError(f"points per axis must be powers of two, got {n}")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "points", tuple(int(n) for n in pts))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def cube(cls, dim: int, n: int, h: float) -> "Grid":
        return cls(dim, (n,) * dim, h)

    # geometry -----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def lengths(self) -> np.ndarray:
        return np.array(self.points, dtype=float) * self.h

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self) -> list[np.ndarray]:
        return [(np.arange(n) - n // 2) * self.h for n in self.points]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def r2(self) -> np.ndarray:
        """``|x|²`` at every site."""
        return sum(x**2 for x in self.mesh())

    @cached_property
    def positions(self) -> np.ndarray:
        """Site coordinates as an ``(M, dim)`` array in row-major order."""
        return np.stack([x.ravel() for x in self.mesh()], axis=1)

    def displacement(self, i=None, j=None) -> np.ndarray:
        """Minimum-image displacement vectors ``x_i - x_j``, shape ``(M, M, dim)``."""
        p = self.positions
        a = p if i is None else p[np.atleast_1d(i)]
        b = p if j is None else p[np.atleast_1d(j)]
        d = a[:, None, :] - b[None, :, :]
        L = self.lengths
        return d - L * np.round(d / L)

    def distance_matrix(self) -> np.ndarray:
        """Minimum-image distances between all pairs of sites."""
        return np.sqrt((self.displacement() ** 2).sum(axis=-1))

    def boundary_mask(self) -> np.ndarray:
        """Sites on the outermost shell of the box."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax, n in enumerate(self.points):
            if n < 2:
                continue
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = n - 1
            mask[tuple(idx)] = True
        return mask

    # spectral dual -------------------------------------------------------

    def wavenumbers(self) -> list[np.ndarray]:
        return [2 * np.pi * np.fft.fftfreq(n, d=self.h) for n in self.points]

    @cached_property
    def k2(self) -> np.ndarray:
        """``|k|²`` on the FFT grid (the symbol of ``-Δ``)."""
        ks = np.meshgrid(*self.wavenumbers(), indexing="ij")
        return sum(k**2 for k in ks)

    @property
    def k2_max(self) -> float:
        return float(self.k2.max())

    def laplacian_matrix(self, kind: str = "spectral") -> np.ndarray:
        """Dense ``M x M`` matrix of ``-Δ`` in the site basis.

        ``"spectral"`` uses the Fourier multiplier ``|k|²``; ``"stencil"`` the
        second-order periodic finite difference.  Both are real symmetric.
        """
        M = self.size
        if kind == "spectral":
            basis = np.eye(M).reshape((M, *self.shape))
            axes = tuple(range(1, self.dim + 1))
            out = np.fft.ifftn(self.k2 * np.fft.fftn(basis, axes=axes), axes=axes)
            L = out.reshape(M, M).real
            return 0.5 * (L + L.T)
        if kind == "stencil":
            L = np.zeros((M, M))
            idx = np.arange(M).reshape(self.shape)
            for ax, n in enumerate(self.points):
                if n == 1:
                    continue
                for shift in (1, -1):
                    nb = np.roll(idx, shift, axis=ax).ravel()
                    np.add.at(L, (idx.ravel(), nb), -1.0 / self.h**2)
                L[np.arange(M), np.arange(M)] += 2.0 / self.h**2
            return L
        raise ValueError(f"unknown Laplacian kind {kind!r}")

    def minus_laplacian(self, values: np.ndarray) -> np.ndarray:
        """Apply the spectral ``-Δ`` to an array of site values."""
        return np.fft.ifftn(self.k2 * np.fft.fftn(values))


class Field:
    """Complex wavefunction sampled on a :class:`Grid`."""

    __slots__ = ("values", "grid")

    def __init__(self, values, grid: Grid):
        values = np.asarray(values, dtype=complex)
        if values.shape != grid.shape:
            if values.size == grid.size:
                values = values.reshape(grid.shape)
            else:
                raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
        self.values = values
        self.grid = grid

    def __repr__(self):
        return f"Field(grid={self.grid}, norm={self.norm():.6g})"

    # constructors -------------------------------------------------------

    @classmethod
    def constant(cls, grid: Grid) -> "Field":
        return cls(np.full(grid.shape, 1.0 / np.sqrt(grid.volume), dtype=complex), grid)

    @classmethod
    def plane_wave(cls, grid: Grid, mode) -> "Field":
        """Normalised ``exp(i k·x)`` with integer mode numbers per axis."""
        mode = np.atleast_1d(mode)
        phase = sum(2 * np.pi * m / L * x for m, L, x in zip(mode, grid.lengths, grid.mesh()))
        return cls(np.exp(1j * phase) / np.sqrt(grid.volume), grid)

    @classmethod
    def gaussian(cls, grid: Grid, width: float = 1.0, center=None) -> "Field":
        """Normalised Gaussian ``exp(-|x-c|²/(2 width²))``."""
        center = np.zeros(grid.dim) if center is None else np.atleast_1d(center)
        r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
        return cls(np.exp(-r2 / (2 * width**2)), grid).normalized()

    @classmethod
    def from_coefficients(cls, coeffs, grid: Grid) -> "Field":
        return cls(np.asarray(coeffs).reshape(grid.shape) / np.sqrt(grid.cell_volume), grid)

    # numerics -----------------------------------------------------------

    def coefficients(self) -> np.ndarray:
        """Components in the orthonormal site basis, ``h^{d/2} φ(x_i)``."""
        return np.sqrt(self.grid.cell_volume) * self.values.ravel()

    def inner(self, other: "Field") -> complex:
        """``<self, other>``, antilinear in ``self``."""
        return complex(self.grid.cell_volume * np.vdot(self.values, other.values))

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def normalized(self) -> "Field":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalise the zero field")
        return Field(self.values / n, self.grid)

    def lp_norm(self, p: float) -> float:
        return float((self.grid.cell_volume * np.sum(np.abs(self.values) ** p)) ** (1 / p))

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.grid)

    def __add__(self, other):
        return Field(self.values + other.values, self.grid)

    def __sub__(self, other):
        return Field(self.values - other.values, self.grid)

    def __mul__(self, c):
        return Field(self.values * c, self.grid)

    __rmul__ = __mul__
