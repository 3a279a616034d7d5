"""Bosonic occupation-number bases and sparse second-quantized operators.

Modes are the sites of a lattice in the orthonormal basis ``e_i`` with
``a(f) = Σ_i conj(c_i) a_i`` where ``c = h^{d/2} f`` are the coefficients of
``f`` (see :meth:`gplab.lattice.Field.coefficients`).  A basis is either one
particle-number sector or the truncated Fock space of sectors ``0..n_max``;
operators are ``scipy.sparse`` CSR matrices acting on that basis.

States are located through a random 64-bit linear hash of their occupation
vector, ``key = occ @ P``.  Ladder operators shift the key by ``±P_j``, so
index lookups are a sort plus ``searchsorted``.
"""

from __future__ import annotations

import itertools
import os
from math import comb
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .lattice import Field

__all__ = [
    "FockBasis",
    "DimensionCapError",
    "dimension_cap",
    "enumerate_basis",
    "coefficients",
    "ladder",
    "op_annihilate",
    "op_create",
    "op_number",
    "op_quadratic",
    "op_pair_create",
    "op_density_interaction",
    "op_excitation_number",
    "projector_Q",
    "ccr_defect",
    "fock_bounds",
    "export_coo",
    "read_coo",
]

DEFAULT_DIM_CAP = 2_000_000


class DimensionCapError(ValueError):
    """Raised when a requested basis exceeds the configured dimension cap."""


def dimension_cap() -> int:
    """Cap on basis dimensions, overridable by ``GPLAB_DIM_CAP``."""
    return int(os.environ.get("GPLAB_DIM_CAP", DEFAULT_DIM_CAP))


def _sector_states(M: int, n: int) -> np.ndarray:
    """Occupations of all ``n``-boson states over ``M`` modes.

    Ordered like ``combinations_with_replacement``: the first mode is
    filled first, so ``M=2, n=2`` gives ``(2,0), (1,1), (0,2)``.
    """
    if n == 0:
        return np.zeros((1, M), dtype=np.int64)
    combos = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations_with_replacement(range(M), n)),
        dtype=np.int64,
    ).reshape(-1, n)
    occ = np.zeros((combos.shape[0], M), dtype=np.int64)
    rows = np.arange(combos.shape[0])
    for col in range(n):
        np.add.at(occ, (rows, combos[:, col]), 1)
    return occ


class FockBasis:
    """Occupation basis of one sector or of the truncated space ``0..n_max``."""

    def __init__(self, M: int, n: int | None = None, n_max: int | None = None,
                 dim_cap: int | None = None):
        if (n is None) == (n_max is None):
            raise ValueError("give exactly one of n (single sector) or n_max (truncated space)")
        if M < 1:
            raise ValueError("need at least one mode")
        top = n if n is not None else n_max
        if top < 0:
            raise ValueError("particle number must be non-negative")
        self.M = int(M)
        self.sectors = [int(n)] if n is not None else list(range(int(n_max) + 1))
        cap = dimension_cap() if dim_cap is None else dim_cap
        dim = sum(comb(M + k - 1, k) for k in self.sectors)
        if dim > cap:
            raise DimensionCapError(f"basis dimension {dim} exceeds cap {cap} (M={M}, sectors {self.sectors[0]}..{self.sectors[-1]})")
        blocks = [_sector_states(self.M, k) for k in self.sectors]
        self.states = np.concatenate(blocks, axis=0)
        self.numbers = self.states.sum(axis=1)
        self._offsets = {}
        start = 0
        for k, b in zip(self.sectors, blocks):
            self._offsets[k] = (start, start + b.shape[0])
            start += b.shape[0]
        self._build_index()

    def _build_index(self):
        for seed in range(16):
            rng = np.random.default_rng(0x9E3779B97F4A7C15 + seed)
            P = rng.integers(1, np.iinfo(np.int64).max, size=self.M, dtype=np.int64).astype(np.uint64)
            with np.errstate(over="ignore"):
                keys = self.states.astype(np.uint64) @ P
            order = np.argsort(keys, kind="stable")
            sk = keys[order]
            if sk.size < 2 or np.all(sk[1:] != sk[:-1]):
                self._P, self._keys, self._order, self._sorted = P, keys, order, sk
                return
        raise RuntimeError("could not find a collision-free occupation hash")

    # basic properties ----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def __len__(self):
        return self.dim

    def __repr__(self):
        if len(self.sectors) == 1:
            return f"FockBasis(M={self.M}, n={self.sectors[0]}, dim={self.dim})"
        return f"FockBasis(M={self.M}, n_max={self.sectors[-1]}, dim={self.dim})"

    @property
    def is_sector(self) -> bool:
        return len(self.sectors) == 1

    @property
    def n(self) -> int:
        if not self.is_sector:
            raise ValueError("truncated basis has no single particle number")
        return self.sectors[0]

    @property
    def n_max(self) -> int:
        return self.sectors[-1]

    def sector_slice(self, n: int) -> slice:
        lo, hi = self._offsets[n]
        return slice(lo, hi)

    def sector_dim(self, n: int) -> int:
        lo, hi = self._offsets[n]
        return hi - lo

    def sector(self, n: int) -> "FockBasis":
        return FockBasis(self.M, n=n)

    def compatible(self, other: "FockBasis") -> bool:
        return self.M == other.M and self.sectors == other.sectors

    # lookup ----------------------------------------------------------------

    def keys_of(self, occ: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.asarray(occ, dtype=np.int64).astype(np.uint64) @ self._P

    def lookup_keys(self, keys: np.ndarray) -> np.ndarray:
        """Positions of hashed states; ``-1`` where absent."""
        keys = np.asarray(keys, dtype=np.uint64)
        pos = np.searchsorted(self._sorted, keys)
        pos_c = np.minimum(pos, self.dim - 1)
        found = self._sorted[pos_c] == keys
        out = np.where(found, self._order[pos_c], -1)
        return out

    def index(self, occ) -> int:
        occ = np.asarray(occ, dtype=np.int64)
        if occ.shape != (self.M,):
            raise ValueError(f"occupation must have length {self.M}")
        i = int(self.lookup_keys(self.keys_of(occ[None, :]))[0])
        if i < 0 or not np.array_equal(self.states[i], occ):
            raise KeyError(f"occupation {tuple(occ)} not in basis")
        return i

    # vectors -----------------------------------------------------------------

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(np.zeros(self.M, dtype=np.int64))] = 1
        return v

    def basis_vector(self, occ) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(occ)] = 1
        return v

    def product_state(self, phi, n: int | None = None) -> np.ndarray:
        """``a*(φ)^n |0> / sqrt(n!)``, the normalised condensate ``φ^{⊗n}``.

        Amplitude of occupation ``o`` is ``sqrt(n!/Π o_i!) Π c_i^{o_i}``.
        """
        c = coefficients(phi)
        n = self.n if n is None else n
        sl = self.sector_slice(n)
        occ = self.states[sl]
        logmult = 0.5 * (gammaln(n + 1) - gammaln(occ + 1).sum(axis=1))
        amp = np.exp(logmult) * np.prod(np.power(c[None, :], occ), axis=1)
        v = np.zeros(self.dim, dtype=complex)
        v[sl] = amp
        return v

    def restrict(self, op, n: int):
        """Block of ``op`` acting inside sector ``n``."""
        sl = self.sector_slice(n)
        return op[sl, sl]


def enumerate_basis(M: int, n: int | None = None, n_max: int | None = None,
                    dim_cap: int | None = None) -> FockBasis:
    return FockBasis(M, n=n, n_max=n_max, dim_cap=dim_cap)


def coefficients(f) -> np.ndarray:
    """Orthonormal-basis coefficients of a :class:`Field` or a plain vector."""
    if isinstance(f, Field):
        return f.coefficients()
    return np.asarray(f, dtype=complex).ravel()


def _target_basis(basis: FockBasis, shift: int) -> FockBasis:
    """Codomain for an operator changing particle number by ``shift``."""
    if basis.is_sector:
        n = basis.n + shift
        if n < 0:
            raise ValueError("operator lowers the particle number below zero")
        return FockBasis(basis.M, n=n)
    return basis


def _csr(rows, cols, vals, shape):
    op = sp.csr_matrix((vals, (rows, cols)), shape=shape, dtype=complex)
    op.sum_duplicates()
    op.eliminate_zeros()
    return op


def op_annihilate(f, basis: FockBasis, target: FockBasis | None = None) -> sp.csr_matrix:
    """``a(f) = Σ_j conj(c_j) a_j``.

    On a single sector ``n`` the result maps into sector ``n-1`` (the
    target basis is built if not given).  On a truncated space it is the
    square matrix of all ``n -> n-1`` blocks.
    """
    c = coefficients(f)
    if c.size != basis.M:
        raise ValueError(f"function has {c.size} components, basis has {basis.M} modes")
    if basis.is_sector and basis.n == 0 and target is None:
        # the vacuum is annihilated; the codomain is the empty space
        return sp.csr_matrix((0, basis.dim), dtype=complex)
    target = target or _target_basis(basis, -1)
    rows, cols, vals = [], [], []
    for j in np.flatnonzero(c):
        src = np.flatnonzero(basis.states[:, j] > 0)
        if src.size == 0:
            continue
        keys = basis._keys[src] - basis._P[j]
        dst = target.lookup_keys(keys) if target is not basis else basis.lookup_keys(keys)
        rows.append(dst)
        cols.append(src)
        vals.append(np.conj(c[j]) * np.sqrt(basis.states[src, j]))
    if not rows:
        return sp.csr_matrix((target.dim, basis.dim), dtype=complex)
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    if np.any(rows < 0):
        raise RuntimeError("annihilation target missing from basis")
    return _csr(rows, cols, vals, (target.dim, basis.dim))


def op_create(f, basis: FockBasis) -> sp.csr_matrix:
    """``a*(f)`` as the exact conjugate transpose of :func:`op_annihilate`.

    On a single sector ``n`` the result maps sector ``n`` into ``n+1``.
    """
    if basis.is_sector:
        up = FockBasis(basis.M, n=basis.n + 1)
        return op_annihilate(f, up, target=basis).conj().T.tocsr()
    return op_annihilate(f, basis).conj().T.tocsr()


def ladder(basis: FockBasis, j: int) -> sp.csr_matrix:
    """Single-mode annihilator ``a_j`` (square on truncated spaces)."""
    e = np.zeros(basis.M)
    e[j] = 1.0
    return op_annihilate(e, basis)


def op_number(basis: FockBasis) -> sp.csr_matrix:
    return sp.diags(basis.numbers.astype(complex)).tocsr()


def _hop_block(basis: FockBasis, j: int, K_col: np.ndarray, chunk: int = 1 << 22):
    """Entries of ``Σ_i K_ij a*_i a_j`` for fixed ``j``."""
    src = np.flatnonzero(basis.states[:, j] > 0)
    targets = np.flatnonzero(K_col)
    if src.size == 0 or targets.size == 0:
        return None
    nj = basis.states[src, j]
    rows, cols, vals = [], [], []
    step = max(1, chunk // max(targets.size, 1))
    for lo in range(0, src.size, step):
        s = src[lo:lo + step]
        n_j = nj[lo:lo + step]
        base = basis._keys[s] - basis._P[j]
        keys = base[:, None] + basis._P[targets][None, :]
        dst = basis.lookup_keys(keys.ravel())
        occ_i = basis.states[s][:, targets] - (targets[None, :] == j)
        amp = np.sqrt(n_j)[:, None] * np.sqrt(occ_i + 1) * K_col[targets][None, :]
        rows.append(dst)
        cols.append(np.repeat(s, targets.size))
        vals.append(amp.ravel())
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def op_quadratic(kernel, basis: FockBasis) -> sp.csr_matrix:
    """``Σ_ij K_ij a*_i a_j`` on the (number-conserving) basis."""
    K = np.asarray(kernel, dtype=complex)
    if K.shape != (basis.M, basis.M):
        raise ValueError(f"kernel shape {K.shape} does not match {basis.M} modes")
    rows, cols, vals = [], [], []
    for j in range(basis.M):
        blk = _hop_block(basis, j, K[:, j])
        if blk is not None:
            rows.append(blk[0]); cols.append(blk[1]); vals.append(blk[2])
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    if np.any(rows < 0):
        raise RuntimeError("hopping target missing from basis")
    return _csr(rows, cols, vals, (basis.dim, basis.dim))


def op_pair_create(kernel, basis: FockBasis) -> sp.csr_matrix:
    """``Σ_ij K_ij a*_i a*_j`` (square matrix on a truncated space).

    Only the symmetric part of ``K`` contributes.  Transitions out of the
    top sector are dropped, which is the truncation of the Fock space.
    """
    if basis.is_sector:
        raise ValueError("pair creation needs a truncated basis")
    K = np.asarray(kernel, dtype=complex)
    K = 0.5 * (K + K.T)
    out = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for i in range(basis.M):
        if not np.any(K[i]):
            continue
        ai = ladder(basis, i)
        out = out + ai.conj().T @ op_annihilate(K[i], basis).conj().T
    out.eliminate_zeros()
    return out.tocsr()


def op_density_interaction(W, basis: FockBasis) -> sp.csr_matrix:
    """``½ Σ_ij W_ij a*_i a*_j a_j a_i`` for a real symmetric ``W`` (diagonal)."""
    W = np.asarray(W, dtype=float)
    occ = basis.states.astype(float)
    diag = 0.5 * (np.einsum("si,ij,sj->s", occ, W, occ) - occ @ np.diag(W))
    return sp.diags(diag.astype(complex)).tocsr()


def projector_Q(phi) -> np.ndarray:
    """``Q = 1 - |φ><φ|`` in the orthonormal site basis."""
    v = coefficients(phi)
    nrm = np.linalg.norm(v)
    if abs(nrm - 1) > 1e-8:
        raise ValueError(f"projector needs a normalised function (norm = {nrm:.12g})")
    return np.eye(v.size) - np.outer(v, v.conj())


def op_excitation_number(phi, basis: FockBasis) -> sp.csr_matrix:
    """``𝒩 - a*(φ)a(φ)``, which is ``N - a*(φ)a(φ)`` on the sector ``N``."""
    v = coefficients(phi)
    projector_Q(phi)
    A_dag_A = op_quadratic(np.outer(v, v.conj()), basis)
    out = (op_number(basis) - A_dag_A).tocsr()
    out.eliminate_zeros()
    return out


def ccr_defect(f, g, basis: FockBasis) -> dict:
    """Operator norm of ``[a(f), a*(g)] - <f,g>`` on a truncated space.

    Returns the defect on sectors ``n <= n_max - 1`` (exact there) and,
    separately, on the top sector where truncation breaks the relation.
    """
    if basis.is_sector:
        raise ValueError("CCR check needs a truncated basis (n_max)")
    a_f = op_annihilate(f, basis)
    a_g_dag = op_annihilate(g, basis).conj().T
    overlap = np.vdot(coefficients(f), coefficients(g))
    comm = (a_f @ a_g_dag - a_g_dag @ a_f).toarray() - overlap * np.eye(basis.dim)
    top = basis.sector_slice(basis.n_max)
    low = slice(0, top.start)
    inner = comm[low, low]
    defect = float(np.linalg.norm(inner, 2)) if inner.size else 0.0
    top_defect = float(np.linalg.norm(comm[top, top], 2))
    return {"defect": defect, "top_sector_defect": top_defect, "overlap": complex(overlap)}


def fock_bounds(psi, basis: FockBasis, phi, f, g, kernel) -> list[dict]:
    """Evaluate the standard ladder-operator bounds on one state.

    ``psi`` lives on the sector ``N`` of ``basis``; ``f, g`` are one-body
    functions and ``kernel`` a two-body matrix ``h`` in orthonormal
    coefficients (rows ``h_x``).  Each entry carries ``lhs <= rhs``.  The
    ``a* a*`` forms change the particle number, so their expectation in a
    fixed sector is identically zero; they are still evaluated.
    """
    if not basis.is_sector:
        raise ValueError("bounds are stated on a fixed-N sector")
    N = basis.n
    psi = np.asarray(psi, dtype=complex)
    nrm2 = float(np.vdot(psi, psi).real)
    Q = projector_Q(phi)
    fc, gc = coefficients(f), coefficients(g)
    H = np.asarray(kernel, dtype=complex)
    nf, ng, nh = np.linalg.norm(fc), np.linalg.norm(gc), np.linalg.norm(H)
    Np = op_excitation_number(phi, basis)
    n_perp = float(np.vdot(psi, Np @ psi).real)
    ev = np.linalg.eigvalsh(Np.toarray())
    up = FockBasis(basis.M, n=N + 1)

    def ann(x):
        return op_annihilate(x, basis)

    def cre(x, src=basis):
        return op_create(x, src)

    def expect(op, shift=0):
        # states of different particle number are orthogonal
        return complex(np.vdot(psi, op @ psi)) if shift == 0 else 0.0

    out = [
        {"name": "excitation number lower bound", "lhs": 0.0, "rhs": float(ev[0]) + 1e-12},
        {"name": "excitation number upper bound", "lhs": float(ev[-1]), "rhs": float(N) + 1e-12},
        {"name": "|a(f) psi| <= |f| sqrt(N)", "lhs": np.linalg.norm(ann(fc) @ psi) if N else 0.0,
         "rhs": nf * np.sqrt(N * nrm2)},
        {"name": "|a*(f) psi| <= |f| sqrt(N+1)", "lhs": np.linalg.norm(cre(fc) @ psi),
         "rhs": nf * np.sqrt((N + 1) * nrm2)},
        {"name": "|a(Qf) psi| <= |f| |N_perp^1/2 psi|",
         "lhs": np.linalg.norm(ann(Q @ fc) @ psi) if N else 0.0, "rhs": nf * np.sqrt(max(n_perp, 0))},
        {"name": "|a*(Qf) psi| <= |f| |(N_perp+1)^1/2 psi|",
         "lhs": np.linalg.norm(cre(Q @ fc) @ psi), "rhs": nf * np.sqrt(n_perp + nrm2)},
    ]
    if N:
        afg = cre(fc, FockBasis(basis.M, n=N - 1)) @ ann(gc)
        aqq = cre(Q @ fc, FockBasis(basis.M, n=N - 1)) @ ann(Q @ gc)
        out.append({"name": "|<a*(f)a(g)>| <= N|f||g|", "lhs": abs(expect(afg)),
                    "rhs": N * nf * ng * nrm2})
        out.append({"name": "|<a*(Qf)a(Qg)>| <= |Qf||Qg|<N_perp>", "lhs": abs(expect(aqq)),
                    "rhs": np.linalg.norm(Q @ fc) * np.linalg.norm(Q @ gc) * n_perp})
    sums = {"cc": 0.0, "qq_cc": 0.0, "ca": 0.0, "qq_ca": 0.0}
    lower = FockBasis(basis.M, n=N - 1) if N else None
    for i in range(basis.M):
        e = np.zeros(basis.M)
        e[i] = 1.0
        hx = H[i]
        # a* a* maps N -> N+2; its diagonal expectation vanishes identically
        sums["cc"] += abs(expect(cre(e, up) @ cre(hx), 2))
        sums["qq_cc"] += abs(expect(cre(Q[:, i], up) @ cre(Q @ hx), 2))
        if N:
            ca = cre(e, lower) @ ann(hx)
            qca = cre(Q[:, i], lower) @ ann(Q @ hx)
            sums["ca"] += abs(expect(ca))
            sums["qq_ca"] += abs(expect(qca))
    out += [
        {"name": "sum_x |<a*_x a*(h_x)>| <= N|h|", "lhs": sums["cc"], "rhs": N * nh * nrm2},
        {"name": "sum_x |<a*(Q_x)a*(Qh_x)>| <= |h|<N_perp>", "lhs": sums["qq_cc"], "rhs": nh * n_perp},
        {"name": "sum_x |<a*_x a(h_x)>| <= N|h|", "lhs": sums["ca"], "rhs": N * nh * nrm2},
        {"name": "sum_x |<a*(Q_x)a(Qh_x)>| <= |h|<N_perp>", "lhs": sums["qq_ca"], "rhs": nh * n_perp},
    ]
    for row in out:
        row["lhs"], row["rhs"] = float(row["lhs"]), float(row["rhs"])
        row["holds"] = row["lhs"] <= row["rhs"] * (1 + 1e-10) + 1e-12
    return out


def export_coo(op, path: str | Path) -> None:
    """Write ``row col re im`` lines (zero-based) for every stored entry."""
    coo = sp.coo_matrix(op)
    data = np.column_stack([coo.row, coo.col, coo.data.real, coo.data.imag])
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        np.savetxt(fh, data, fmt=["%d", "%d", "%.17g", "%.17g"])


def read_coo(path: str | Path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().split()
    shape = (int(header[2]), int(header[3]))
    data = np.loadtxt(path, ndmin=2, comments="#")
    if data.size == 0:
        return sp.csr_matrix(shape, dtype=complex)
    return sp.csr_matrix((data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=shape)
