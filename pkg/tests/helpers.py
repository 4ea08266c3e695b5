"""Independent oracles shared across the test modules.

Everything here goes through the block-circulant definition of the
t-product (never the FFT path under test) or through brute-force
minimization, so the checks stay independent of the production kernels.
"""

import numpy as np

from tomodict.tensor_core import circ, fold, squeeze, ttranspose, unfold


def tprod_definition(B, C):
    """fold(circ(B) @ unfold(C)): the definition-path t-product."""
    return fold(circ(B) @ unfold(C), B.shape[2])


def circulant_of_vector(v):
    """Column circulant: first column v, entry (i, j) = v[(i - j) mod n]."""
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    return np.array([[v[(i - j) % n] for j in range(n)] for i in range(n)])


def shifted_prototype_sum(D, H, j):
    """Patch j as a sum of prototype slices times circulant weights.

    Each dictionary slice D_i is multiplied by the circulant matrix of the
    tensor-transposed tube H(i, j, :); summing over i reproduces
    squeeze((D*H)[:, j, :]).
    """
    p, s, r = D.shape
    out = np.zeros((p, r))
    for i in range(s):
        Di = squeeze(D[:, i : i + 1, :])
        tube = squeeze(ttranspose(H[i : i + 1, j : j + 1, :])).ravel()
        out += Di @ circulant_of_vector(tube)
    return out


def rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def random_feasible_dictionary(p, s, r, generator, fill=0.9):
    """Random non-negative dictionary with atom norms at fill * sqrt(p*r)."""
    D = generator.uniform(0.0, 1.0, size=(p, s, r))
    radius = np.sqrt(p * r)
    for i in range(s):
        nrm = np.linalg.norm(D[:, i, :])
        if nrm > 0:
            D[:, i, :] *= fill * radius / nrm
    return D


def planted_factorization(seed=0, p=4, s=6, t=50, r=4, density=0.2):
    """A well-identifiable planted instance: atoms with disjoint supports,
    coefficients 20% dense, Y = D_true * H_true >= 0."""
    g = rng(seed)
    radius = np.sqrt(p * r)
    D_true = np.zeros((p, s, r))
    cells = [(i, k) for i in range(p) for k in range(r)]
    g.shuffle(cells)
    base, extra = divmod(p * r, s)
    pos = 0
    for i in range(s):
        size = base + (1 if i < extra else 0)
        for a, b in cells[pos : pos + size]:
            D_true[a, i, b] = g.uniform(0.5, 1.0)
        pos += size
        D_true[:, i, :] *= 0.9 * radius / np.linalg.norm(D_true[:, i, :])
    H_true = g.uniform(0.0, 1.0, (s, t, r)) * (g.uniform(size=(s, t, r)) < density)
    from tomodict.tensor_core import tprod

    return tprod(D_true, H_true), D_true, H_true


def planted_image(M=16, p=4, s=4, seed=0):
    """An image assembled from a planted dictionary, so its patch tensor has
    an exact sparse non-negative factorization."""
    from tomodict.patch_image import PatchGeometry, assemble_image
    from tomodict.tensor_core import tprod

    g = rng(seed)
    q = (M // p) ** 2
    radius = np.sqrt(p * p)
    D = np.zeros((p, s, p))
    cells = [(i, k) for i in range(p) for k in range(p)]
    g.shuffle(cells)
    per = len(cells) // s
    for i in range(s):
        for a, b in cells[i * per : (i + 1) * per]:
            D[a, i, b] = g.uniform(0.5, 1.0)
        D[:, i, :] *= 0.9 * radius / np.linalg.norm(D[:, i, :])
    C = g.uniform(0.0, 0.4, (s, q, p)) * (g.uniform(size=(s, q, p)) < 0.25)
    X = tprod(D, C)
    X /= max(1.0, X.max() * 1.05)
    geom = PatchGeometry(p=p, r=p, M=M, N=M)
    return assemble_image(X, geom)


# ---------------------------------------------------------------------------
# independently coded matrix ADMM (oracle for the r=1 degeneracy)


def matrix_project_dykstra(T, radius, max_iter=100, tol=1e-10):
    from numpy.linalg import norm

    x = T.copy()
    p_inc = np.zeros_like(x)
    q_inc = np.zeros_like(x)
    for _ in range(max_iter):
        w = x + p_inc
        y = w.copy()
        nrm = norm(w, axis=0)
        over = nrm > radius
        if np.any(over):
            y[:, over] *= radius / nrm[over]
        p_inc = w - y
        x_new = np.maximum(y + q_inc, 0.0)
        q_inc = y + q_inc - x_new
        delta = norm(x_new - x)
        x = x_new
        if delta < tol:
            break
    return x


def matrix_admm_iterates(Y, s, lam, rho, iters, seed):
    """Plain-matrix non-negative sparse coding ADMM with the same
    initialization rules; returns the per-iteration state tuples."""
    from scipy.linalg import cho_factor, cho_solve

    p, t = Y.shape
    radius = np.sqrt(p)
    generator = rng(seed)
    idx = generator.choice(t, size=s, replace=s > t)
    U = Y[:, idx].copy()
    V = np.eye(s, t)
    H = V.copy()
    Lam = np.zeros((p, s))
    LamBar = np.zeros((s, t))
    out = []
    for _ in range(iters):
        D = matrix_project_dykstra(U - Lam / rho, radius)
        V = cho_solve(
            cho_factor(U.T @ U + rho * np.eye(s), lower=True, check_finite=False),
            U.T @ Y + LamBar + rho * H,
            check_finite=False,
        )
        W = V - LamBar / rho
        H = np.maximum(np.sign(W) * np.maximum(np.abs(W) - lam / rho, 0.0), 0.0)
        rhs = Y @ V.T + Lam + rho * D
        U = cho_solve(
            cho_factor(V @ V.T + rho * np.eye(s), lower=True, check_finite=False),
            rhs.T,
            check_finite=False,
        ).T
        Lam = Lam + rho * (D - U)
        LamBar = LamBar + rho * (H - V)
        out.append((D.copy(), H.copy(), U.copy(), V.copy(), Lam.copy(), LamBar.copy()))
    return out
