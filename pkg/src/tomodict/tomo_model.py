"""Parallel-beam tomography: system matrix, sinogram simulation, Tikhonov.

The image is an ``N x N`` grid of unit square pixels covering
``[-N/2, N/2]^2``; pixel (row i, col j) occupies ``x in [j - N/2, j+1 - N/2]``
and ``y in [i - N/2, i+1 - N/2]``, and the flat pixel index is the
Fortran-order ``i + j*N`` used throughout the package.  For each projection
angle theta (degrees) the rays travel along ``(cos t, sin t)`` and their
offsets are equispaced across the grid's circumscribing width (the
diagonal ``sqrt(2)*N``), so rays near the ends can miss the grid; missed
rays keep their (empty) rows so the measurement count stays
``num_angles * rays_per_angle``.

Matrix entries are exact ray/pixel intersection lengths from parametric
grid traversal.  Angles sample ``[angle_start, angle_end)`` half-open, which
avoids the duplicate view at 180 degrees.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite
from scipy.sparse.linalg import LinearOperator, cg

__all__ = [
    "ParallelGeometry",
    "Sinogram",
    "build_parallel_matrix",
    "forward_project",
    "add_relative_gaussian_noise",
    "tikhonov_solve",
    "save_sinogram_csv",
    "load_sinogram_csv",
    "save_sinogram_raw",
    "load_sinogram_raw",
    "export_matrix_market",
]


@dataclass(frozen=True)
class ParallelGeometry:
    n_side: int
    num_angles: int
    rays_per_angle: int
    angle_start: float = 0.0
    angle_end: float = 180.0

    def __post_init__(self):
        if self.n_side < 1:
            raise ValueError("n_side must be >= 1")
        if self.num_angles < 1 or self.rays_per_angle < 1:
            raise ValueError("num_angles and rays_per_angle must be >= 1")

    @property
    def m(self) -> int:
        return self.num_angles * self.rays_per_angle

    @property
    def n_pixels(self) -> int:
        return self.n_side * self.n_side

    def angles_deg(self) -> np.ndarray:
        return np.linspace(
            self.angle_start, self.angle_end, self.num_angles, endpoint=False
        )

    def ray_offsets(self) -> np.ndarray:
        width = np.sqrt(2.0) * self.n_side
        if self.rays_per_angle == 1:
            return np.zeros(1)
        return np.linspace(-0.5 * width, 0.5 * width, self.rays_per_angle)


@dataclass
class Sinogram:
    values: np.ndarray
    geometry: ParallelGeometry
    noise_level: float = 0.0
    seed: int = 0


def _trace_ray(x0, y0, dx, dy, half, n_side):
    """Intersection segments of one ray with the pixel grid.

    Returns (cols, lens): flat pixel indices and the lengths of the ray
    segments inside them.  The ray is x0 + a*dx, y0 + a*dy with unit
    direction, clipped against the grid square [-half, half]^2; crossing
    parameters with every x- and y-plane are merged and consecutive
    midpoints identify the traversed pixels.
    """
    a_lo, a_hi = -np.inf, np.inf
    for pos, d in ((x0, dx), (y0, dy)):
        if abs(d) < 1e-14:
            if not (-half < pos < half):
                return None
        else:
            a1 = (-half - pos) / d
            a2 = (half - pos) / d
            if a1 > a2:
                a1, a2 = a2, a1
            a_lo = max(a_lo, a1)
            a_hi = min(a_hi, a2)
    if not (a_hi - a_lo > 1e-12):
        return None
    planes = np.arange(n_side + 1) - half
    alphas = [np.array([a_lo, a_hi])]
    if abs(dx) >= 1e-14:
        ax = (planes - x0) / dx
        alphas.append(ax[(ax > a_lo) & (ax < a_hi)])
    if abs(dy) >= 1e-14:
        ay = (planes - y0) / dy
        alphas.append(ay[(ay > a_lo) & (ay < a_hi)])
    a = np.unique(np.concatenate(alphas))
    lens = np.diff(a)
    keep = lens > 1e-12
    if not np.any(keep):
        return None
    mids = 0.5 * (a[:-1] + a[1:])[keep]
    lens = lens[keep]
    mx = x0 + mids * dx
    my = y0 + mids * dy
    col = np.floor(mx + half).astype(np.int64)
    row = np.floor(my + half).astype(np.int64)
    inside = (col >= 0) & (col < n_side) & (row >= 0) & (row < n_side)
    if not np.any(inside):
        return None
    return row[inside] + col[inside] * n_side, lens[inside]


def build_parallel_matrix(geom: ParallelGeometry) -> sp.csr_matrix:
    """Assemble the sparse system matrix for the given geometry.

    Row ``a*rays_per_angle + i`` holds the intersection lengths of ray i of
    view a with every pixel it crosses (unit pixel side, so each entry is at
    most sqrt(2)).  Fully deterministic in the geometry.
    """
    half = 0.5 * geom.n_side
    offsets = geom.ray_offsets()
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for a, theta in enumerate(np.deg2rad(geom.angles_deg())):
        dx, dy = np.cos(theta), np.sin(theta)
        # offset along the perpendicular (-sin, cos)
        for i, t in enumerate(offsets):
            hit = _trace_ray(-t * dy, t * dx, dx, dy, half, geom.n_side)
            if hit is None:
                continue
            c, v = hit
            rows.append(np.full(c.size, a * geom.rays_per_angle + i, dtype=np.int64))
            cols.append(c)
            vals.append(v)
    if rows:
        A = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(geom.m, geom.n_pixels),
        ).tocsr()
    else:
        A = sp.csr_matrix((geom.m, geom.n_pixels))
    A.sort_indices()
    return A


def forward_project(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size != A.shape[1]:
        raise ValueError(f"image vector length {x.size} != {A.shape[1]} pixels")
    return A @ x


def add_relative_gaussian_noise(b: np.ndarray, level: float, seed: int = 0) -> np.ndarray:
    """Add white Gaussian noise with an exactly realized relative 2-norm
    level: ``e = level * ||b|| * g / ||g||`` with g standard normal from a
    Philox counter-based stream, so ``||e|| / ||b|| == level``."""
    b = np.asarray(b, dtype=np.float64)
    if level < 0:
        raise ValueError("noise level must be >= 0")
    if level == 0:
        return b.copy()
    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        raise ValueError("cannot add relative noise to an all-zero sinogram")
    rng = np.random.Generator(np.random.Philox(seed))
    g = rng.standard_normal(b.size)
    return b + (level * nb / float(np.linalg.norm(g))) * g


def tikhonov_solve(
    A: sp.csr_matrix,
    b: np.ndarray,
    lambda_tikh: float,
    max_iter: int = 500,
    tol: float = 1e-10,
) -> np.ndarray:
    """Minimize ``||Ax - b||^2 + lambda_tikh * ||x||^2`` by conjugate
    gradients on the normal equations ``(A^T A + lambda I) x = A^T b``."""
    if lambda_tikh <= 0:
        raise ValueError("lambda_tikh must be > 0")
    b = np.asarray(b, dtype=np.float64)
    if b.size != A.shape[0]:
        raise ValueError(f"data length {b.size} != {A.shape[0]} rows")
    n = A.shape[1]
    At = A.T.tocsr()

    def matvec(v):
        return At @ (A @ v) + lambda_tikh * v

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    x, _ = cg(op, At @ b, rtol=tol, atol=0.0, maxiter=max_iter)
    return x


# ---------------------------------------------------------------------------
# persistence


def save_sinogram_csv(path, sino: Sinogram) -> None:
    """Rows of (angle index, ray index, value)."""
    geom = sino.geometry
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["angle_index", "ray_index", "value"])
        for a in range(geom.num_angles):
            for i in range(geom.rays_per_angle):
                w.writerow([a, i, repr(float(sino.values[a * geom.rays_per_angle + i]))])


def load_sinogram_csv(path, geom: ParallelGeometry) -> np.ndarray:
    vals = np.zeros(geom.m)
    with open(path, newline="") as f:
        rd = csv.reader(f)
        next(rd)
        for a, i, v in rd:
            vals[int(a) * geom.rays_per_angle + int(i)] = float(v)
    return vals


def save_sinogram_raw(path, sino: Sinogram) -> None:
    np.asarray(sino.values, dtype="<f8").tofile(path)


def load_sinogram_raw(path) -> np.ndarray:
    return np.fromfile(path, dtype="<f8").astype(np.float64)


def export_matrix_market(path, A: sp.csr_matrix) -> None:
    """Coordinate-format export for validation in external tools."""
    mmwrite(str(path), A.tocoo())
