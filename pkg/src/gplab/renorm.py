"""Correlation kernel, renormalized excitation operators and their identities.

Lattice conventions (orthonormal site basis, ``v = h^{d/2} φ``):

* ``A = a(φ)``, ``c_i = a(Q e_i) = a_i - v_i A`` with ``Q = 1 - v v^†``;
* ``κ = h^d k`` is the kernel matrix, ``κ̃ = Q κ Q^T`` its two-sided
  projection, so ``Σ κ_ij c*_i c*_j = Σ κ̃_lm a*_l a*_m``;
* ``W_ij`` is the sampled two-body potential (function values), so the
  interaction reads ``½ Σ W_ij a*_i a*_j a_j a_i``;
* ``L`` is the matrix of ``-Δ`` (spectral by default).

Operators are assembled on the truncated Fock space of sectors ``0..N``
(products never leave it, since every expression is normal ordered or
lowers the particle number first) and restricted to the sector ``N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fock import (FockBasis, coefficients, ladder, op_annihilate, op_density_interaction,
                   op_number, op_pair_create, op_quadratic, projector_Q)
from .gp import GpTrajectory, gp_rhs, gp_rhs_derivative
from .lattice import Field, Grid
from .scattering import ScatteringSolution

__all__ = [
    "cutoff",
    "cutoff_derivative",
    "CorrelationKernel",
    "build_kernel",
    "kernel_profile",
    "kernel_norm_fft",
    "kernel_time_derivatives",
    "kernel_time_derivatives_fd",
    "kernel_diagnostics",
    "RenormSystem",
    "RenormOperators",
    "op_b_field",
    "op_b_dagger",
    "build_N_ren",
    "build_Q_ren",
    "build_H_ren",
    "build_cH_N_and_parts",
    "commutator_identities",
    "sandwich_constants",
    "q_ren_constant",
    "gronwall_constant",
    "min_eig",
    "on_shell_residual",
    "dtQ_check",
]


# cut-off and kernel ------------------------------------------------------

def cutoff(d, r: float):
    """C² bump: 1 on ``[0, r]``, quintic smoothstep down to 0 on ``[r, 2r]``."""
    d = np.asarray(d, dtype=float)
    s = np.clip((d - r) / r, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def cutoff_derivative(d, r: float):
    d = np.asarray(d, dtype=float)
    s = (d - r) / r
    inside = (s > 0) & (s < 1)
    out = np.zeros_like(d)
    si = s[inside]
    out[inside] = -30.0 * si**2 * (1 - si) ** 2 / r
    return out


def kernel_profile(sol: ScatteringSolution, N: float, r: float, d):
    """Radial factor ``N (1 - f)(N d) χ(d)`` of the kernel."""
    d = np.asarray(d, dtype=float)
    return N * (1.0 - sol(N * d)) * cutoff(d, r)


@dataclass
class CorrelationKernel:
    """Kernel ``k(x, y)`` sampled at site pairs (function values)."""

    k: np.ndarray
    grid: Grid
    N: float
    r: float
    phi: Field
    sol: ScatteringSolution | None = None
    profile: np.ndarray | None = field(default=None, repr=False)

    @property
    def kappa(self) -> np.ndarray:
        """Matrix acting on orthonormal coefficients, ``h^d k``."""
        return self.grid.cell_volume * self.k

    def hs_norm(self) -> float:
        return float(self.grid.cell_volume * np.linalg.norm(self.k))

    def column_norms(self) -> np.ndarray:
        """``‖k(·, x)‖`` for every site ``x``."""
        return np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.k) ** 2, axis=0))

    def column_constant(self) -> float:
        """Smallest ``C`` with ``‖k(·, x)‖ <= C |φ(x)|`` over all sites."""
        phi = np.abs(self.phi.values.ravel())
        cols = self.column_norms()
        mask = phi > 1e-300
        if np.any(cols[~mask] > 0):
            return float("inf")
        return float(np.max(cols[mask] / phi[mask])) if np.any(mask) else 0.0

    def projected(self) -> np.ndarray:
        """``(Q⊗Q) κ`` in the orthonormal basis."""
        Q = projector_Q(self.phi)
        return Q @ self.kappa @ Q.T


def _check_radius(grid: Grid, r: float):
    if r <= 0:
        raise ValueError("cut-off radius must be positive")
    if r > 0.5 * float(np.min(grid.lengths)):
        raise ValueError(f"cut-off radius {r} exceeds half the torus width")


def build_kernel(phi: Field, sol: ScatteringSolution, N: float, r: float) -> CorrelationKernel:
    """``k(x, y) = N (1-f)(N|x-y|) χ(x-y) φ(x) φ(y)`` with minimum-image distances."""
    grid = phi.grid
    _check_radius(grid, r)
    prof = kernel_profile(sol, N, r, grid.distance_matrix())
    v = phi.values.ravel()
    return CorrelationKernel(prof * np.outer(v, v), grid, N, r, phi, sol, prof)


def kernel_norm_fft(phi: Field, sol: ScatteringSolution, N: float, r: float) -> float:
    """``‖k‖`` without forming the ``M x M`` matrix.

    ``‖k‖² = h^{2d} Σ_u w(u)² C(u)`` where ``w`` is the radial profile at
    displacement ``u`` and ``C`` the periodic autocorrelation of ``|φ|²``.
    """
    grid = phi.grid
    _check_radius(grid, r)
    disp = [np.minimum(np.arange(n), n - np.arange(n)) * grid.h for n in grid.points]
    d = np.sqrt(sum(x**2 for x in np.meshgrid(*disp, indexing="ij")))
    w2 = kernel_profile(sol, N, r, d) ** 2
    rho = phi.density()
    rho_hat = np.fft.fftn(rho)
    corr = np.fft.ifftn(np.abs(rho_hat) ** 2).real
    return float(grid.cell_volume * np.sqrt(max(np.sum(w2 * corr), 0.0)))


def kernel_time_derivatives(traj: GpTrajectory, sol: ScatteringSolution, N: float,
                            r: float, t: float):
    """``(∂_t k, ∂_t² k)`` by the product rule along a GP trajectory."""
    phi = traj.at(t)
    dphi = gp_rhs(phi, traj.params)
    d2phi = gp_rhs_derivative(phi, dphi, traj.params)
    _check_radius(phi.grid, r)
    prof = kernel_profile(sol, N, r, phi.grid.distance_matrix())
    v, dv, d2v = (x.values.ravel() for x in (phi, dphi, d2phi))
    dk = prof * (np.outer(dv, v) + np.outer(v, dv))
    d2k = prof * (np.outer(d2v, v) + 2 * np.outer(dv, dv) + np.outer(v, d2v))
    return dk, d2k


def kernel_time_derivatives_fd(traj: GpTrajectory, sol: ScatteringSolution, N: float,
                               r: float, t: float):
    """Centred finite differences of :func:`build_kernel` along the trajectory."""
    i = traj.index(t)
    if i == 0 or i == len(traj) - 1:
        raise ValueError(f"finite differences need neighbours of t = {t}")
    ks = [build_kernel(traj.field(j), sol, N, r).k for j in (i - 1, i, i + 1)]
    dt = traj.sample_dt
    return (ks[2] - ks[0]) / (2 * dt), (ks[2] - 2 * ks[1] + ks[0]) / dt**2


def _gradient_matrices(grid: Grid) -> list[np.ndarray]:
    """Spectral ``∂/∂x_a`` as dense site matrices."""
    M = grid.size
    basis = np.eye(M).reshape((M, *grid.shape))
    axes = tuple(range(1, grid.dim + 1))
    hat = np.fft.fftn(basis, axes=axes)
    out = []
    for a, k in enumerate(grid.wavenumbers()):
        shape = [1] * (grid.dim + 1)
        shape[a + 1] = k.size
        kk = k.copy()
        n = k.size
        if n % 2 == 0:
            kk[n // 2] = 0.0  # drop the unpaired Nyquist mode so the result is real
        D = np.fft.ifftn(1j * kk.reshape(shape) * hat, axes=axes).reshape(M, M).real
        out.append(D.T)
    return out


def kernel_diagnostics(kern: CorrelationKernel) -> dict:
    """Norms of the discrete analogues of the regularised kernels.

    ``f_t = -Δ_1 k - ½N³(Vf)(N(x-y))φφ - 2N²∇f(N(x-y))·∇_1(χφφ)`` and
    ``g_t(x, y) = ∫ dz ∇_2 k(x, z) · ∇_2 k̄(y, z)`` (also with ``(Q⊗Q)k``).
    Norms are Hilbert-Schmidt norms with lattice weights.
    """
    grid = kern.grid
    hd = grid.cell_volume
    out = {"hs_norm": kern.hs_norm(), "column_constant": kern.column_constant()}
    if not np.any(kern.k):
        out.update(f_norm=0.0, g_norm=0.0, g_projected_norm=0.0)
        return out
    L = grid.laplacian_matrix()
    grads = _gradient_matrices(grid)
    k = kern.k
    lap1 = L @ k
    sol, N, r = kern.sol, kern.N, kern.r
    disp = grid.displacement()
    d = np.sqrt((disp**2).sum(-1))
    v = kern.phi.values.ravel()
    pot = sol.potential
    vf = pot(N * d) * sol(N * d)
    fprime = sol.derivative(N * d)
    chi = cutoff(d, r)
    dchi = cutoff_derivative(d, r)
    unit = np.divide(disp, d[..., None], out=np.zeros_like(disp), where=d[..., None] > 0)
    grad_phi = np.stack([D @ v for D in grads], axis=-1)
    # ∇_1 (χ(x-y) φ(x) φ(y)) = χ'(|d|) d̂ φ(x)φ(y) + χ ∇φ(x) φ(y)
    grad1 = dchi[..., None] * unit * np.outer(v, v)[..., None] \
        + chi[..., None] * grad_phi[:, None, :] * v[None, :, None]
    sing = 0.5 * N**3 * vf * np.outer(v, v) + 2 * N**2 * fprime * np.sum(unit * grad1, axis=-1)
    f_t = lap1 - sing
    out["f_norm"] = float(hd * np.linalg.norm(f_t))

    def g_of(kmat):
        g = np.zeros_like(kmat, dtype=complex)
        for D in grads:
            dk = kmat @ D.T  # derivative in the second argument
            g += hd * dk @ dk.conj().T
        return g

    out["g_norm"] = float(hd * np.linalg.norm(g_of(k)))
    kt = kern.projected() / hd
    out["g_projected_norm"] = float(hd * np.linalg.norm(g_of(kt)))
    return out


# renormalized operators ---------------------------------------------------

def _herm(op):
    return op.conj().T


def _sp(x):
    return x.tocsr() if sp.issparse(x) else sp.csr_matrix(x)


@dataclass
class RenormOperators:
    """Sector-``N`` matrices of the renormalized objects."""

    N_ren: sp.csr_matrix
    Q_ren: sp.csr_matrix | None
    K_ren: sp.csr_matrix | None
    V_ren: sp.csr_matrix | None
    cH_N: sp.csr_matrix | None
    parts: list | None
    N_perp: sp.csr_matrix
    H_N: sp.csr_matrix | None = None


class RenormSystem:
    """Fock-space building blocks relative to a condensate ``φ`` with ``N`` bosons."""

    def __init__(self, phi, N: int, laplacian: np.ndarray | None = None, W: np.ndarray | None = None):
        if N < 1:
            raise ValueError("need at least one particle")
        self.v = coefficients(phi)
        self.M = self.v.size
        self.N = int(N)
        self.Q = projector_Q(self.v)
        self.T = FockBasis(self.M, n_max=self.N)
        self.sector = self.T.sector_slice(self.N)
        self.L = laplacian
        self.W = W
        self.a = [ladder(self.T, i) for i in range(self.M)]
        self.A = op_annihilate(self.v, self.T)
        self.Ad = _herm(self.A).tocsr()
        self.AA = (self.A @ self.A).tocsr()
        self.AdA = (self.Ad @ self.A).tocsr()
        self.number = op_number(self.T)
        self.N_perp_full = (self.number - self.AdA).tocsr()
        self.c = [op_annihilate(self.Q[:, i], self.T) for i in range(self.M)]
        self._Qc = None

    # helpers ----------------------------------------------------------------

    def restrict(self, op) -> sp.csr_matrix:
        return _sp(op)[self.sector, self.sector].tocsr()

    def annihilate(self, f) -> sp.csr_matrix:
        return op_annihilate(f, self.T)

    def create(self, g) -> sp.csr_matrix:
        """``a*(g) = Σ g_z a*_z``."""
        return _herm(op_annihilate(g, self.T)).tocsr()

    def projected_kernel(self, kappa: np.ndarray) -> np.ndarray:
        return self.Q @ kappa @ self.Q.T

    def quadratic_c(self, K: np.ndarray) -> sp.csr_matrix:
        """``Σ_ij K_ij c*_i c_j = Σ (Q K Q)_lm a*_l a_m``."""
        return op_quadratic(self.Q @ K @ self.Q, self.T)

    # renormalized fields ----------------------------------------------------

    def b(self, i: int, kappa_t: np.ndarray) -> sp.csr_matrix:
        """``b_i = c_i + a*(κ̃_i) A A / N`` (κ̃ already projected)."""
        return (self.c[i] + self.create(kappa_t[i]) @ self.AA / self.N).tocsr()

    def b_combo(self, u: np.ndarray, kappa_t: np.ndarray) -> sp.csr_matrix:
        """``Σ_j u_j b_j``."""
        u = np.asarray(u, dtype=complex)
        lower = op_annihilate(np.conj(self.Q.T @ u), self.T)
        upper = self.create(kappa_t.T @ u)
        return (lower + upper @ self.AA / self.N).tocsr()

    # operators (full truncated space) ---------------------------------------

    def n_ren_full(self, kappa: np.ndarray) -> sp.csr_matrix:
        kt = self.projected_kernel(kappa)
        pair = op_pair_create(kt, self.T) @ self.AA / self.N
        return (self.N_perp_full + pair + _herm(pair)).tocsr()

    def q_ren_full(self, kappa_dot: np.ndarray) -> sp.csr_matrix:
        kt = self.projected_kernel(1j * kappa_dot)
        pair = 0.5 * op_pair_create(kt, self.T) @ self.AA / self.N
        return (pair + _herm(pair)).tocsr()

    def k_ren_full(self, kappa: np.ndarray, laplacian: np.ndarray | None = None) -> sp.csr_matrix:
        """``Σ L_ij b*_i b_j`` through the eigen-decomposition of ``L``."""
        L = self.L if laplacian is None else laplacian
        kt = self.projected_kernel(kappa)
        lam, U = np.linalg.eigh(L)
        out = sp.csr_matrix((self.T.dim, self.T.dim), dtype=complex)
        for k in range(self.M):
            if lam[k] <= 1e-14 * max(1.0, lam.max()):
                if lam[k] < -1e-10:
                    raise ValueError("Laplacian matrix is not positive semidefinite")
                continue
            beta = self.b_combo(U[:, k], kt)
            out = out + lam[k] * (_herm(beta) @ beta)
        return out.tocsr()

    def _pair_density(self, W):
        """``D_i = Σ_j W_ij c*_j c_j`` for every ``i``."""
        Q = self.Q
        return [op_quadratic(Q @ np.diag(W[i]) @ Q, self.T) for i in range(self.M)]

    def v_ren_full(self, kappa: np.ndarray, W: np.ndarray | None = None) -> sp.csr_matrix:
        W = self.W if W is None else W
        kt = self.projected_kernel(kappa)
        D = self._pair_density(W)
        out = sp.csr_matrix((self.T.dim, self.T.dim), dtype=complex)
        for i in range(self.M):
            if not np.any(W[i]):
                continue
            bi = self.b(i, kt)
            out = out + 0.5 * (_herm(bi) @ D[i] @ bi)
        return out.tocsr()

    def h_n_full(self, L=None, W=None) -> sp.csr_matrix:
        L = self.L if L is None else L
        W = self.W if W is None else W
        return (op_quadratic(L, self.T) + op_density_interaction(W, self.T)).tocsr()

    def ch_n_full(self, dv: np.ndarray, e_gp: float, L=None, W=None) -> sp.csr_matrix:
        """``H_N - N e_GP - (A* a(Q i∂_tφ) + h.c.) + <i∂_tφ, φ> N_⊥``."""
        H = self.h_n_full(L, W)
        idv = 1j * np.asarray(dv, dtype=complex)
        lin = self.Ad @ self.annihilate(self.Q @ idv)
        shift = np.vdot(idv, self.v)
        ident = sp.identity(self.T.dim, dtype=complex, format="csr")
        return (H - self.N * e_gp * ident - lin - _herm(lin) + shift * self.N_perp_full).tocsr()

    def decomposition_full(self, dv: np.ndarray, e_gp: float, g: float, cell_volume: float,
                           L=None, W=None) -> list[sp.csr_matrix]:
        """The five parts ``H^(0) .. H^(4)`` assembled term by term."""
        L = self.L if L is None else L
        W = self.W if W is None else W
        v, Q, N = self.v, self.Q, self.N
        Ad, A, AdA, AA = self.Ad, self.A, self.AdA, self.AA
        ident = sp.identity(self.T.dim, dtype=complex, format="csr")
        rho = np.abs(v) ** 2
        conv = W @ rho                     # Σ_j W_ij |v_j|²
        S = float(np.real(rho @ conv))     # Σ_ij W_ij |v_i|²|v_j|²
        w = conv * v                       # coefficients of (N³V(N·)*|φ|²)φ / N
        u = g * rho * v / cell_volume      # coefficients of g|φ|²φ
        idv = 1j * np.asarray(dv, dtype=complex)
        shift = np.vdot(idv, v)
        kin = float(np.real(np.vdot(v, L @ v)))

        H0 = (0.5 * S * (Ad @ Ad @ AA) - N * e_gp * ident + kin * AdA
              + shift * self.N_perp_full)

        aw = self.annihilate(Q @ w)
        lin = N * (Ad @ aw) - Ad @ self.annihilate(Q @ u) - Ad @ aw @ self.N_perp_full
        H1 = lin + _herm(lin)

        pair = op_pair_create(Q @ (W * np.outer(v, v)) @ Q.T, self.T) @ AA
        H2 = (self.quadratic_c(L) + self.quadratic_c(np.diag(conv)) @ AdA
              + self.quadratic_c(W * np.outer(v, v.conj())) @ AdA
              + 0.5 * (pair + _herm(pair)))

        cubic = sp.csr_matrix((self.T.dim, self.T.dim), dtype=complex)
        for i in range(self.M):
            if not np.any(W[i]):
                continue
            Xi = self.create(Q @ (W[i] * v))
            cubic = cubic + _herm(self.c[i]) @ Xi @ self.c[i]
        cubic = cubic @ A
        H3 = cubic + _herm(cubic)

        D = self._pair_density(W)
        H4 = sp.csr_matrix((self.T.dim, self.T.dim), dtype=complex)
        for i in range(self.M):
            if np.any(W[i]):
                H4 = H4 + 0.5 * (_herm(self.c[i]) @ D[i] @ self.c[i])
        return [_sp(H) for H in (H0, H1, H2, H3, H4)]

    def build(self, kappa: np.ndarray, kappa_dot: np.ndarray | None = None,
              dv: np.ndarray | None = None, e_gp: float | None = None,
              g: float | None = None, cell_volume: float | None = None,
              with_parts: bool = True, with_ren: bool = True) -> RenormOperators:
        """Assemble every renormalized object on the sector ``N``.

        ``with_ren=False`` skips ``K_ren`` and ``V_ren``, the most expensive
        pieces, when only the Gronwall functional is needed.
        """
        R = self.restrict
        N_ren = R(self.n_ren_full(kappa))
        Q_ren = R(self.q_ren_full(kappa_dot)) if kappa_dot is not None else None
        K_ren = R(self.k_ren_full(kappa)) if with_ren and self.L is not None else None
        V_ren = R(self.v_ren_full(kappa)) if with_ren and self.W is not None else None
        cH = parts = H = None
        if dv is not None and self.L is not None and self.W is not None:
            cH = R(self.ch_n_full(dv, e_gp))
            H = R(self.h_n_full())
            if with_parts:
                parts = [R(P) for P in self.decomposition_full(dv, e_gp, g, cell_volume)]
        return RenormOperators(N_ren, Q_ren, K_ren, V_ren, cH, parts, R(self.N_perp_full), H)

    # identities ---------------------------------------------------------------

    def commutator_b_nren(self, i: int, kappa: np.ndarray) -> dict:
        """Direct ``[b_i, N_ren]`` against its closed form, on sector ``N``.

        Closed form: ``b_i - 2N⁻² Σ_z <κ̃_z, κ̃_i> a_z A*²A²
        + 2N⁻² a*(κ̃_i) Σ_z a(κ̃_z) a_z (2A*A + 1)`` with the inner product
        antilinear in its first slot.  The variant with ``<κ̃_i, κ̃_z>``
        agrees only for real kernels; its defect is reported as
        ``swapped_defect``.  The commutator maps sector ``N`` to ``N-1``;
        both sides are compared on that block.
        """
        kt = self.projected_kernel(kappa)
        N = self.N
        bi = self.b(i, kt)
        Nren = self.n_ren_full(kappa)
        direct = bi @ Nren - Nren @ bi
        Ad2A2 = self.Ad @ self.Ad @ self.AA
        ident = sp.identity(self.T.dim, dtype=complex, format="csr")
        term3 = sp.csr_matrix((self.T.dim, self.T.dim), dtype=complex)
        for z in range(self.M):
            term3 = term3 + self.annihilate(kt[z]) @ self.a[z]
        common = bi + 2.0 / N**2 * self.create(kt[i]) @ term3 @ (2 * self.AdA + ident)
        rows = self.T.sector_slice(N - 1)
        defects = {}
        # gram[i, z] = <κ̃_z, κ̃_i>; the swapped order is its complex conjugate
        gram = kt @ kt.conj().T
        for name, coef in (("max_defect", gram[i]), ("swapped_defect", np.conj(gram[i]))):
            term2 = sp.csr_matrix((self.T.dim, self.T.dim), dtype=complex)
            for z in np.flatnonzero(coef):
                term2 = term2 + coef[z] * self.a[z]
            closed = common - 2.0 / N**2 * term2 @ Ad2A2
            defects[name] = _maxabs((direct - closed)[rows, self.sector])
        defects["scale"] = _maxabs(direct[rows, self.sector])
        return defects

    def ladder_identities(self) -> dict:
        """``[N_⊥, c*_x A] = c*_x A`` and ``[N_⊥, A*A] = 0`` on sector ``N``."""
        Np = self.N_perp_full
        worst = 0.0
        for i in range(self.M):
            X = _herm(self.c[i]) @ self.A
            worst = max(worst, _maxabs(self.restrict(Np @ X - X @ Np - X)))
        zero = _maxabs(self.restrict(Np @ self.AdA - self.AdA @ Np))
        return {"n_perp_raises": worst, "n_perp_condensate": zero}



# functional entry points ----------------------------------------------------

def _kappa(kernel) -> np.ndarray:
    """Orthonormal-basis kernel matrix from a :class:`CorrelationKernel` or a matrix."""
    return kernel.kappa if isinstance(kernel, CorrelationKernel) else np.asarray(kernel, dtype=complex)


def op_b_field(x: int, phi, kernel, N: int) -> sp.csr_matrix:
    """``b_x`` as the block from sector ``N`` to sector ``N-1``."""
    S = RenormSystem(phi, N)
    b = S.b(x, S.projected_kernel(_kappa(kernel)))
    return b[S.T.sector_slice(N - 1), S.sector].tocsr()


def op_b_dagger(y: int, phi, kernel, N: int) -> sp.csr_matrix:
    """``b*_y``, the adjoint of :func:`op_b_field`, from sector ``N-1`` to ``N``."""
    return _herm(op_b_field(y, phi, kernel, N)).tocsr()


def build_N_ren(phi, kernel, N: int) -> sp.csr_matrix:
    S = RenormSystem(phi, N)
    return S.restrict(S.n_ren_full(_kappa(kernel)))


def build_Q_ren(phi, kernel_dot, N: int) -> sp.csr_matrix:
    """``Q_ren`` from the time derivative of the kernel (same units as the kernel)."""
    S = RenormSystem(phi, N)
    return S.restrict(S.q_ren_full(_kappa(kernel_dot)))


def build_H_ren(phi, kernel, L: np.ndarray, W: np.ndarray, N: int):
    """``(K_ren, V_ren)`` on the sector ``N``."""
    S = RenormSystem(phi, N, laplacian=L, W=W)
    kappa = _kappa(kernel)
    return S.restrict(S.k_ren_full(kappa)), S.restrict(S.v_ren_full(kappa))


def build_cH_N_and_parts(phi, dv, e_gp: float, L: np.ndarray, W: np.ndarray, N: int,
                         g: float, cell_volume: float, kernel=None,
                         kernel_dot=None) -> RenormOperators:
    """``ℋ_N``, its five parts and (if kernels are given) the renormalized operators."""
    S = RenormSystem(phi, N, laplacian=L, W=W)
    M = S.M
    kappa = np.zeros((M, M)) if kernel is None else _kappa(kernel)
    kdot = None if kernel_dot is None else _kappa(kernel_dot)
    return S.build(kappa, kdot, dv=dv, e_gp=e_gp, g=g, cell_volume=cell_volume,
                   with_ren=kernel is not None)


def commutator_identities(phi, kernel, N: int) -> dict:
    """Largest defects of the ``[b_x, N_ren]`` closed form and the number ladder identities."""
    S = RenormSystem(phi, N)
    kappa = _kappa(kernel)
    comm = [S.commutator_b_nren(i, kappa) for i in range(S.M)]
    out = {"b_nren": max(c["max_defect"] for c in comm),
           "b_nren_swapped": max(c["swapped_defect"] for c in comm),
           "b_nren_scale": max(c["scale"] for c in comm)}
    out.update(S.ladder_identities())
    return out


def _maxabs(op) -> float:
    op = _sp(op)
    return float(np.max(np.abs(op.data))) if op.nnz else 0.0


# inequalities ----------------------------------------------------------------

def _dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op)


def _hermitize(X):
    X = _dense(X)
    return 0.5 * (X + X.conj().T)


def min_eig(op) -> float:
    return float(sla.eigh(_hermitize(op), eigvals_only=True, subset_by_index=[0, 0])[0])


def sandwich_constants(N_ren, N_perp) -> tuple[float, float]:
    """Smallest ``C₋, C₊`` with ``C₋⁻¹(N_⊥+1) <= N_ren+1 <= C₊(N_⊥+1)``."""
    I = np.eye(N_ren.shape[0])
    A = _hermitize(N_ren) + I
    lam = sla.eigh(A, _hermitize(N_perp) + I, eigvals_only=True)
    if lam[0] <= 0:
        return float("inf"), float(lam[-1])
    return float(1.0 / lam[0]), float(lam[-1])


def _positive_weight(N_ren):
    """``N_ren + 1`` or ``None`` when it fails to be positive definite."""
    B = _hermitize(N_ren) + np.eye(N_ren.shape[0])
    if min_eig(B) <= 1e-12:
        return None
    return B


def q_ren_constant(Q_ren, N_ren) -> float:
    """Smallest ``C`` with ``±Q_ren <= C (N_ren + 1)`` (``inf`` if no ``C`` exists)."""
    B = _positive_weight(N_ren)
    if B is None:
        return float("inf")
    lam = sla.eigh(_hermitize(Q_ren), B, eigvals_only=True)
    return float(max(abs(lam[0]), abs(lam[-1])))


def gronwall_constant(cH_N, Q_ren, N_ren, N_perp) -> float:
    """Smallest ``C >= 0`` with ``N_⊥ <= ℋ_N + Q_ren + C (N_ren + 1)``."""
    B = _positive_weight(N_ren)
    if B is None:
        return float("inf")
    Qr = 0 if Q_ren is None else _hermitize(Q_ren)
    X = _hermitize(N_perp) - _hermitize(cH_N) - Qr
    lam = sla.eigh(X, B, eigvals_only=True)
    return float(max(lam[-1], 0.0))


def on_shell_residual(v, dv, L, g: float, cell_volume: float) -> float:
    """``‖Q(i∂_tφ - (-Δφ + g|φ|²φ))‖`` in orthonormal coefficients."""
    v = np.asarray(v, dtype=complex)
    Q = projector_Q(v)
    u = g * np.abs(v) ** 2 * v / cell_volume
    return float(np.linalg.norm(Q @ (1j * np.asarray(dv) - L @ v - u)))


def dtQ_check(traj: GpTrajectory, t: float) -> float:
    """Max entry of ``(Q(t+Δ)-Q(t-Δ))/2Δ + (|φ><Q∂_tφ| + h.c.)``."""
    i = traj.index(t)
    if i == 0 or i == len(traj) - 1:
        raise ValueError(f"finite differences need neighbours of t = {t}")
    Qs = [projector_Q(traj.field(j)) for j in (i - 1, i + 1)]
    fd = (Qs[1] - Qs[0]) / (2 * traj.sample_dt)
    phi = traj.field(i)
    v = phi.coefficients()
    dv = gp_rhs(phi, traj.params).coefficients()
    Qdv = projector_Q(v) @ dv
    exact = -(np.outer(v, Qdv.conj()) + np.outer(Qdv, v.conj()))
    return float(np.max(np.abs(fd - exact)))
