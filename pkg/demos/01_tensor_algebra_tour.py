"""Tour of the third-order tensor algebra.

Walks through the building blocks: squeeze/twist, unfold/fold, the block
circulant view, the t-product and its Fourier-domain computation, the tensor
transpose, and the shifted-prototype expansion that makes the t-product
interesting for dictionaries: one stored prototype patch plus a tube fiber
of weights reproduces every cyclic column shift of that prototype.

Run:  python demos/01_tensor_algebra_tour.py
"""

import numpy as np

import tomodict as td

rng = np.random.Generator(np.random.Philox(0))

print("== squeeze / twist ==")
Mmat = np.array([[1.0, 3.0], [2.0, 4.0]])
T = td.twist(Mmat)
print(f"twist maps a {Mmat.shape} matrix to a {T.shape} tensor")
print("squeeze(twist(M)) == M:", np.array_equal(td.squeeze(T), Mmat))

print("\n== unfold / circ ==")
tube = td.twist(np.array([[1.0, 2.0, 3.0]]))  # a 1x1x3 tube fiber
print("circ of the tube (a,b,c):")
print(td.circ(tube))

print("\n== t-product: FFT path equals the block-circulant definition ==")
B = rng.standard_normal((3, 4, 5))
C = rng.standard_normal((4, 2, 5))
P_fft = td.tprod(B, C)
P_def = td.fold(td.circ(B) @ td.unfold(C), 5)
rel = np.linalg.norm(P_fft - P_def) / np.linalg.norm(P_def)
print(f"relative difference: {rel:.2e}")

print("\n== algebra laws ==")
I = td.identity_tensor(3, 5)
print("identity law max error:", np.max(np.abs(td.tprod(I, B) - B)))
a = rng.standard_normal((1, 1, 6))
b = rng.standard_normal((1, 1, 6))
print(
    "tube fibers commute:",
    np.allclose(td.tprod(a, b), td.tprod(b, a), atol=1e-13),
)
At = td.ttranspose(td.tprod(B, C))
Bt = td.tprod(td.ttranspose(C), td.ttranspose(B))
print("transpose reverses products:", np.allclose(At, Bt, atol=1e-12))

print("\n== shifted prototypes ==")
# Patch j of D*H is sum_i D_i @ C[h], with C[h] the circulant of the
# (transposed) tube H(i,j,:). A single prototype atom therefore also
# contributes all of its cyclic column shifts, without storing them.
p, s, t, r = 4, 2, 3, 4
D = rng.uniform(0.0, 1.0, (p, s, r))
H = np.zeros((s, t, r))
H[0, 0, 0] = 1.0  # patch 0: the raw prototype 0
H[0, 1, 1] = 1.0  # patch 1: prototype 0 shifted by one column
Y = td.tprod(D, H)
proto = td.squeeze(D[:, 0:1, :])
patch0 = td.squeeze(Y[:, 0:1, :])
patch1 = td.squeeze(Y[:, 1:2, :])
print("patch 0 equals the prototype:", np.allclose(patch0, proto, atol=1e-12))
print(
    "patch 1 equals the prototype cyclically shifted one column:",
    np.allclose(patch1, np.roll(proto, 1, axis=1), atol=1e-12),
)

print("\n== per-frequency SPD solves ==")
U = rng.standard_normal((3, 2, 4))
G = td.tprod(td.ttranspose(U), U) + 0.5 * td.identity_tensor(2, 4)
RHS = rng.standard_normal((2, 5, 4))
X = td.tsolve_spd(G, RHS)
print(
    "residual of tsolve_spd:",
    np.linalg.norm(td.tprod(G, X) - RHS) / np.linalg.norm(RHS),
)
