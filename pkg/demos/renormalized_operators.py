"""Exact operator identities for the renormalized excitation operators.

A random condensate, kernel, Laplacian and pair potential on three sites
with three bosons; every identity is checked as a matrix equation.

Run: python3 demos/renormalized_operators.py
"""

import numpy as np

from gplab.renorm import (RenormSystem, gronwall_constant, min_eig, q_ren_constant,
                          sandwich_constants)

rng = np.random.default_rng(3)
M, N = 3, 3
v = rng.normal(size=M) + 1j * rng.normal(size=M)
v /= np.linalg.norm(v)
k = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
k = 0.2 * (k + k.T) / np.linalg.norm(k + k.T)
kd = 0.2 * np.eye(M)
B = rng.normal(size=(M, M))
L = B @ B.T
W = np.abs(rng.normal(size=(M, M)))
W = W + W.T
g = 1.0
dv = -1j * (L @ v + g * np.abs(v) ** 2 * v)    # on-shell time derivative

S = RenormSystem(v, N, laplacian=L, W=W)
ops = S.build(k, kd, dv=dv, e_gp=0.5, g=g, cell_volume=1.0)
print("sector dimension:", ops.N_perp.shape[0])
print("five parts minus the full operator:", np.abs((sum(ops.parts) - ops.cH_N).toarray()).max())
comm = [S.commutator_b_nren(i, k) for i in range(M)]
print("[b, N_ren] closed form defect:", max(c["max_defect"] for c in comm))
print("same with the Gram entry conjugated:", max(c["swapped_defect"] for c in comm))
print("smallest eigenvalues of K_ren, V_ren:", min_eig(ops.K_ren), min_eig(ops.V_ren))
print("sandwich constants C-, C+:", sandwich_constants(ops.N_ren, ops.N_perp))
print("Q_ren constant:", q_ren_constant(ops.Q_ren, ops.N_ren))
print("Gronwall constant:", gronwall_constant(ops.cH_N, ops.Q_ren, ops.N_ren, ops.N_perp))
