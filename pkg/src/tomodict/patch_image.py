"""Images, patch tensors and the patch-boundary operator.

Grayscale images are 2D float64 arrays with values in [0, 1], indexed
``img[row, col]``.  The flat image vector used by the tomography model is
the Fortran-order ravel (column stacking), so pixel ``(i, j)`` sits at
``i + j*M``.

An ``M x N`` image splits into ``q = (M/p)(N/r)`` non-overlapping ``p x r``
patches.  Each patch becomes one lateral slice of a ``p x q x r`` tensor;
blocks are numbered column-major over the block grid.  The permutation that
maps the vec of that tensor back to image pixels is kept as an explicit
index array so the partition, its inverse and the boundary operator all
agree on one ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "PatchGeometry",
    "PermutationMap",
    "extract_training_patches",
    "partition_image",
    "assemble_image",
    "build_permutation",
    "boundary_diff_operator",
    "boundary_penalty",
    "load_image",
    "save_pgm",
]


@dataclass(frozen=True)
class PatchGeometry:
    """Non-overlapping partition of an M x N image into p x r patches."""

    p: int
    r: int
    M: int
    N: int

    def __post_init__(self):
        if self.p < 1 or self.r < 1 or self.M < 1 or self.N < 1:
            raise ValueError("patch geometry requires positive dimensions")
        if self.M % self.p != 0:
            raise ValueError(f"patch rows p={self.p} must divide image rows M={self.M}")
        if self.N % self.r != 0:
            raise ValueError(f"patch cols r={self.r} must divide image cols N={self.N}")

    @property
    def blocks_down(self) -> int:
        return self.M // self.p

    @property
    def blocks_across(self) -> int:
        return self.N // self.r

    @property
    def q(self) -> int:
        return self.blocks_down * self.blocks_across


def _check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D grayscale image, got ndim={img.ndim}")
    return img


def extract_training_patches(
    img: np.ndarray,
    p: int,
    r: int,
    stride: int = 1,
    max_patches: int | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Slide a p x r window over the image and stack the windows as lateral
    slices of a ``p x t x r`` tensor.

    Windows are scanned row-major (rows outer, columns inner) with the given
    stride.  When more than ``max_patches`` windows exist, a seeded uniform
    subsample is kept, in scan order.
    """
    img = _check_image(img)
    M, N = img.shape
    if p > M or r > N:
        raise ValueError(f"patch {p}x{r} larger than image {M}x{N}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    windows = sliding_window_view(img, (p, r))[::stride, ::stride]
    patches = windows.reshape(-1, p, r)
    t = patches.shape[0]
    if max_patches is not None and t > max_patches:
        rng = np.random.Generator(np.random.Philox(seed))
        keep = np.sort(rng.choice(t, size=max_patches, replace=False))
        patches = patches[keep]
    # (t, p, r) -> (p, t, r)
    return np.ascontiguousarray(patches.transpose(1, 0, 2))


def partition_image(img: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    """Partition an image into the ``p x q x r`` tensor of its patches.

    Block (u, v) of the block grid becomes lateral slice
    ``j = v*(M/p) + u`` (column-major block order), so that
    ``squeeze(X[:, j, :])`` is exactly the patch ``img[u*p:(u+1)*p,
    v*r:(v+1)*r]``.
    """
    img = _check_image(img)
    if img.shape != (geom.M, geom.N):
        raise ValueError(f"image shape {img.shape} != geometry ({geom.M}, {geom.N})")
    bd, ba = geom.blocks_down, geom.blocks_across
    # img[u*p + i, v*r + k] == B[u, i, v, k]
    B = img.reshape(bd, geom.p, ba, geom.r)
    X = B.transpose(1, 2, 0, 3).reshape(geom.p, geom.q, geom.r)
    return np.ascontiguousarray(X)


def assemble_image(X: np.ndarray, geom: PatchGeometry) -> np.ndarray:
    """Inverse of :func:`partition_image`."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape != (geom.p, geom.q, geom.r):
        raise ValueError(
            f"patch tensor shape {X.shape} != ({geom.p}, {geom.q}, {geom.r})"
        )
    bd, ba = geom.blocks_down, geom.blocks_across
    B = X.reshape(geom.p, ba, bd, geom.r).transpose(2, 0, 1, 3)
    return np.ascontiguousarray(B.reshape(geom.M, geom.N))


@dataclass(frozen=True)
class PermutationMap:
    """Bijection between vec(patch tensor) positions and image pixel indices.

    ``forward[pos] = pixel`` means the patch-tensor element at flat position
    ``pos`` lands on image pixel ``pixel``; ``apply`` realizes the
    permutation matrix, ``apply_adjoint`` its transpose (= inverse).
    """

    geom: PatchGeometry
    forward: np.ndarray = field(repr=False)

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.size != self.forward.size:
            raise ValueError(f"vector length {v.size} != {self.forward.size}")
        out = np.empty_like(v)
        out[self.forward] = v
        return out

    def apply_adjoint(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.size != self.forward.size:
            raise ValueError(f"vector length {x.size} != {self.forward.size}")
        return x[self.forward]


def build_permutation(geom: PatchGeometry) -> PermutationMap:
    """Index map consistent with :func:`partition_image` and the Fortran
    image vec: tensor element (i, j, k) with j = v*(M/p)+u goes to pixel
    (u*p + i, v*r + k)."""
    p, r, M = geom.p, geom.r, geom.M
    bd = geom.blocks_down
    i, j, k = np.meshgrid(
        np.arange(p), np.arange(geom.q), np.arange(r), indexing="ij"
    )
    u = j % bd
    v = j // bd
    pixel = (u * p + i) + (v * r + k) * M
    pos = i + j * p + k * p * geom.q
    forward = np.empty(M * geom.N, dtype=np.int64)
    forward[pos.ravel()] = pixel.ravel()
    return PermutationMap(geom=geom, forward=forward)


def boundary_diff_operator(geom: PatchGeometry) -> sp.csr_matrix:
    """Sparse first-difference operator across patch boundaries.

    One row per pixel pair straddling a boundary (+1/-1 entries, unit grid
    spacing), columns indexed in image vec order.  Row count is
    ``M*(N/r - 1) + N*(M/p - 1)``.
    """
    M, N = geom.M, geom.N
    rows_h = M * (geom.blocks_across - 1)
    rows_v = N * (geom.blocks_down - 1)
    n_rows = rows_h + rows_v
    row_idx = np.empty(2 * n_rows, dtype=np.int64)
    col_idx = np.empty(2 * n_rows, dtype=np.int64)
    vals = np.empty(2 * n_rows)
    row = 0
    pos = 0

    def add_pairs(left_pix, right_pix):
        nonlocal row, pos
        n = left_pix.size
        rr = np.arange(row, row + n)
        row_idx[pos : pos + n] = rr
        col_idx[pos : pos + n] = right_pix
        vals[pos : pos + n] = 1.0
        pos += n
        row_idx[pos : pos + n] = rr
        col_idx[pos : pos + n] = left_pix
        vals[pos : pos + n] = -1.0
        pos += n
        row += n

    i = np.arange(M)
    for v in range(1, geom.blocks_across):
        c = v * geom.r
        add_pairs(i + (c - 1) * M, i + c * M)
    j = np.arange(N)
    for u in range(1, geom.blocks_down):
        rrow = u * geom.p
        add_pairs((rrow - 1) + j * M, rrow + j * M)

    L = sp.coo_matrix(
        (vals, (row_idx, col_idx)), shape=(n_rows, M * N)
    ).tocsr()
    L.sort_indices()
    return L


def boundary_penalty(z: np.ndarray, geom: PatchGeometry, L: sp.csr_matrix) -> float:
    """Mean squared jump across patch boundaries:
    ``0.5 * ||L z||^2 / (M*(M/p - 1) + N*(N/r - 1))``."""
    z = np.asarray(z, dtype=np.float64)
    if z.size != geom.M * geom.N:
        raise ValueError(f"vector length {z.size} != {geom.M * geom.N}")
    den = geom.M * (geom.blocks_down - 1) + geom.N * (geom.blocks_across - 1)
    if den == 0:
        return 0.0
    Lz = L @ z
    return 0.5 * float(Lz @ Lz) / den


# ---------------------------------------------------------------------------
# image file I/O


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: only binary (P5) PGM files are supported")
    # header: magic, width, height, maxval; '#' comments allowed between tokens
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval < 1 or maxval > 65535:
        raise ValueError(f"{path}: invalid maxval {maxval}")
    count = width * height
    if maxval > 255:
        raw = np.frombuffer(data, dtype=">u2", count=count, offset=pos)
    else:
        raw = np.frombuffer(data, dtype=np.uint8, count=count, offset=pos)
    if raw.size != count:
        raise ValueError(f"{path}: truncated pixel data")
    return raw.reshape(height, width).astype(np.float64) / maxval


def _read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)
            maxval = 255.0
        elif im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64)
            maxval = 65535.0
        else:
            raise ValueError(
                f"{path}: expected a grayscale PNG, got mode {im.mode!r}"
            )
    return arr / maxval


def load_image(path) -> np.ndarray:
    """Load an 8- or 16-bit grayscale PGM (P5) or PNG, rescaled to [0, 1]."""
    s = str(path).lower()
    if s.endswith(".pgm"):
        img = _read_pgm(path)
    elif s.endswith(".png"):
        img = _read_png(path)
    else:
        raise ValueError(f"unsupported image format: {path}")
    return np.clip(img, 0.0, 1.0)


def save_pgm(path, img: np.ndarray) -> None:
    """Write an image as 8-bit binary PGM; values are clipped to [0, 1]."""
    img = _check_image(img)
    quant = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    M, N = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{N} {M}\n255\n".encode("ascii"))
        f.write(quant.tobytes())
