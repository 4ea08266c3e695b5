"""Third-order tensor algebra built on the t-product.

A third-order tensor is a plain ``numpy.ndarray`` of shape ``(l, m, n)``
with float64 entries.  The ``vec`` ordering used throughout the package is
column stacking of the frontal slices, i.e. element ``(i, j, k)`` sits at
flat index ``(k*m + j)*l + i``; this is exactly a Fortran-order ravel of
the array.

The t-product ``B * C`` of an ``l x p x n`` tensor with a ``p x m x n``
tensor is ``fold(circ(B) @ unfold(C))``.  Because a block circulant matrix
is block-diagonalized by the DFT along the tube dimension, the product is
computed per frequency: ``Yhat[:, :, k] = Bhat[:, :, k] @ Chat[:, :, k]``.
For real tensors only the first ``n//2 + 1`` frequency slices are formed;
the remaining ones follow from conjugate symmetry.  ``circ`` itself is only
materialized for small verification work, never inside the product.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "NumericalError",
    "TensorNorms",
    "squeeze",
    "twist",
    "unfold",
    "fold",
    "circ",
    "identity_tensor",
    "ttranspose",
    "tprod",
    "tsolve_spd",
    "norms",
    "vec",
    "unvec",
    "fourier_slices",
    "inverse_fourier_slices",
    "save_tensor",
    "load_tensor",
]

# Imaginary residue allowed after an inverse DFT, relative to the Frobenius
# norm of the real part.  Exceeding it means an upstream kernel broke
# conjugate symmetry.
IMAG_RESIDUE_REL_TOL = 1e-8

TNS_MAGIC = b"TNS1"


class NumericalError(RuntimeError):
    """A numerical kernel failed (factorization breakdown, symmetry loss).

    ``frequency`` carries the index of the offending Fourier slice when the
    failure happened inside a per-frequency solve, else ``None``.
    """

    def __init__(self, message: str, frequency: int | None = None):
        super().__init__(message)
        self.frequency = frequency


class TensorNorms(NamedTuple):
    fro: float
    sum: float
    max: float


def _as_tensor3(A, name: str = "tensor") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 3:
        raise ValueError(f"{name} must be a third-order array, got ndim={A.ndim}")
    return A


def squeeze(lateral: np.ndarray) -> np.ndarray:
    """Flatten an ``l x 1 x n`` lateral slice to the ``l x n`` matrix X with
    ``X[i, k] = lateral[i, 0, k]``."""
    lateral = _as_tensor3(lateral, "lateral slice")
    if lateral.shape[1] != 1:
        raise ValueError(
            f"squeeze expects middle dimension 1, got shape {lateral.shape}"
        )
    return lateral[:, 0, :].copy()


def twist(M: np.ndarray) -> np.ndarray:
    """Orient an ``l x n`` matrix into the third dimension (inverse of
    :func:`squeeze`)."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"twist expects a matrix, got ndim={M.ndim}")
    return M[:, None, :].copy()


def unfold(A: np.ndarray) -> np.ndarray:
    """Stack the frontal slices vertically into an ``l*n x m`` matrix."""
    A = _as_tensor3(A)
    l, m, n = A.shape
    return np.transpose(A, (2, 0, 1)).reshape(l * n, m)


def fold(M: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor with ``n`` frontal slices."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"fold expects a matrix, got ndim={M.ndim}")
    ln, m = M.shape
    if n < 1 or ln % n != 0:
        raise ValueError(f"fold: row count {ln} not divisible by n={n}")
    l = ln // n
    return np.transpose(M.reshape(n, l, m), (1, 2, 0)).copy()


def circ(A: np.ndarray) -> np.ndarray:
    """Block circulant matrix of shape ``l*n x m*n`` generated by unfold(A).

    Block ``(bi, bj)`` holds frontal slice ``(bi - bj) mod n``, so the first
    block column is ``A^(1), ..., A^(n)`` top to bottom and every further
    block column is the cyclic down-shift of the previous one.  Meant for
    small tensors (tests, verification); the memory cost is ``l*m*n^2``.
    """
    A = _as_tensor3(A)
    l, m, n = A.shape
    out = np.empty((l * n, m * n))
    for bi in range(n):
        for bj in range(n):
            out[bi * l : (bi + 1) * l, bj * m : (bj + 1) * m] = A[:, :, (bi - bj) % n]
    return out


def identity_tensor(m: int, n: int) -> np.ndarray:
    """The ``m x m x n`` tensor whose first frontal slice is I_m and whose
    remaining slices are zero (the unit of the t-product)."""
    if m < 1 or n < 1:
        raise ValueError(f"identity_tensor needs positive dims, got ({m}, {n})")
    I = np.zeros((m, m, n))
    I[:, :, 0] = np.eye(m)
    return I


def ttranspose(A: np.ndarray) -> np.ndarray:
    """Tensor transpose: transpose every frontal slice, then reverse the
    order of slices 2..n."""
    A = _as_tensor3(A)
    At = np.transpose(A, (1, 0, 2)).copy()
    if At.shape[2] > 1:
        At[:, :, 1:] = At[:, :, :0:-1]
    return At


def vec(A: np.ndarray) -> np.ndarray:
    """Column-stack the frontal slices into a vector of length l*m*n."""
    return np.ravel(np.asarray(A, dtype=np.float64), order="F")


def unvec(v: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`vec` for the given ``(l, m, n)`` shape."""
    v = np.asarray(v, dtype=np.float64)
    l, m, n = shape
    if v.size != l * m * n:
        raise ValueError(f"unvec: length {v.size} does not match shape {shape}")
    return v.reshape(shape, order="F").copy()


def _rfft(A: np.ndarray) -> np.ndarray:
    return np.fft.rfft(A, axis=2)


def _mirror_full(Fh: np.ndarray, n: int) -> np.ndarray:
    # Rebuild the full n-slice spectrum from the n//2+1 stored slices.
    l, m, h = Fh.shape
    full = np.empty((l, m, n), dtype=np.complex128)
    full[:, :, :h] = Fh
    if h < n:
        full[:, :, h:] = np.conj(Fh[:, :, 1 : n - h + 1])[:, :, ::-1]
    return full


def _inverse_checked(full: np.ndarray) -> np.ndarray:
    out = np.fft.ifft(full, axis=2)
    re = np.ascontiguousarray(out.real)
    imag_norm = float(np.linalg.norm(out.imag))
    if imag_norm > IMAG_RESIDUE_REL_TOL * float(np.linalg.norm(re)):
        raise NumericalError(
            "imaginary residue after inverse DFT exceeds "
            f"{IMAG_RESIDUE_REL_TOL:g} * ||result||_F "
            f"(residue={imag_norm:.3e}); conjugate symmetry was lost upstream"
        )
    return re


def _irfft_checked(Fh: np.ndarray, n: int) -> np.ndarray:
    return _inverse_checked(_mirror_full(Fh, n))


def fourier_slices(A: np.ndarray) -> np.ndarray:
    """Full DFT of A along the tube dimension, as an ``l x m x n`` complex
    array.  Only ``n//2 + 1`` slices are transformed; the rest are filled by
    conjugate symmetry (bit-compatible with the full transform up to
    rounding)."""
    A = _as_tensor3(A)
    return _mirror_full(_rfft(A), A.shape[2])


def inverse_fourier_slices(F: np.ndarray) -> np.ndarray:
    """Inverse DFT along the tube dimension with an imaginary-residue check.

    Raises :class:`NumericalError` when the residue exceeds
    ``IMAG_RESIDUE_REL_TOL * ||result||_F``; otherwise the residue is
    discarded and the real tensor returned.
    """
    F = np.asarray(F, dtype=np.complex128)
    if F.ndim != 3:
        raise ValueError(f"expected a third-order spectrum, got ndim={F.ndim}")
    return _inverse_checked(F)


def tprod(B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """t-product of ``B`` (l x p x n) and ``C`` (p x m x n).

    Equals ``fold(circ(B) @ unfold(C))`` but is computed per frequency in
    the Fourier domain.
    """
    B = _as_tensor3(B, "left factor")
    C = _as_tensor3(C, "right factor")
    l, p, n = B.shape
    p2, m, n2 = C.shape
    if p != p2 or n != n2:
        raise ValueError(
            f"tprod: shapes {B.shape} and {C.shape} do not chain "
            "(inner and tube dimensions must agree)"
        )
    Bh = np.moveaxis(_rfft(B), 2, 0)
    Ch = np.moveaxis(_rfft(C), 2, 0)
    Yh = np.moveaxis(Bh @ Ch, 0, 2)
    return _irfft_checked(Yh, n)


def tsolve_spd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A * X = B`` where every Fourier slice of A is Hermitian
    positive definite (e.g. Gram tensors ``U^T * U + rho * I``).

    Each frequency is solved by a Cholesky factorization.  A factorization
    failure raises :class:`NumericalError` carrying the frequency index.
    """
    A = _as_tensor3(A, "system tensor")
    B = _as_tensor3(B, "right-hand side")
    s, s2, n = A.shape
    sb, m, nb = B.shape
    if s != s2:
        raise ValueError(f"tsolve_spd: system tensor must be square, got {A.shape}")
    if sb != s or nb != n:
        raise ValueError(
            f"tsolve_spd: right-hand side {B.shape} does not match system {A.shape}"
        )
    Ah = _rfft(A)
    Bh = _rfft(B)
    Xh = np.empty_like(Bh)
    for k in range(Ah.shape[2]):
        try:
            c = cho_factor(Ah[:, :, k], lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"Fourier slice {k} is not positive definite: {exc}", frequency=k
            ) from exc
        Xh[:, :, k] = cho_solve(c, Bh[:, :, k], check_finite=False)
    return _irfft_checked(Xh, n)


def norms(A: np.ndarray) -> TensorNorms:
    """Frobenius, entrywise-1 (sum) and entrywise-infinity (max) norms."""
    A = np.asarray(A, dtype=np.float64)
    a = np.abs(A)
    return TensorNorms(
        fro=float(np.sqrt(np.sum(A * A))),
        sum=float(np.sum(a)),
        max=float(a.max()) if a.size else 0.0,
    )


def save_tensor(path, A: np.ndarray) -> None:
    """Write a tensor in the TNS1 format: magic ``TNS1``, three little-endian
    uint64 dims (l, m, n), then l*m*n little-endian float64 values in vec
    order."""
    A = _as_tensor3(A)
    with open(path, "wb") as f:
        f.write(TNS_MAGIC)
        f.write(np.asarray(A.shape, dtype="<u8").tobytes())
        f.write(vec(A).astype("<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    """Read a TNS1 file written by :func:`save_tensor`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != TNS_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {TNS_MAGIC!r}")
        dims = np.frombuffer(f.read(24), dtype="<u8")
        if dims.size != 3 or np.any(dims < 1):
            raise ValueError(f"{path}: invalid dimension header {dims}")
        l, m, n = (int(d) for d in dims)
        data = np.frombuffer(f.read(8 * l * m * n), dtype="<f8")
        if data.size != l * m * n:
            raise ValueError(f"{path}: truncated payload")
    return unvec(data.astype(np.float64), (l, m, n))
