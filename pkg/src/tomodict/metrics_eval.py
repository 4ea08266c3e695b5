"""Reconstruction quality and coefficient sparsity metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

__all__ = [
    "MetricsReport",
    "relative_error",
    "ssim",
    "density",
    "compressibility",
    "append_metrics_csv",
]

SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class MetricsReport:
    re: float
    ssim: float
    density_percent: float
    compressibility_percent: float
    iterations: int
    wall_time_seconds: float = 0.0
    label: str = ""


def relative_error(x: np.ndarray, x_exact: np.ndarray) -> float:
    """Relative 2-norm error ``||x_exact - x|| / ||x_exact||``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    x_exact = np.asarray(x_exact, dtype=np.float64).ravel()
    if x.size != x_exact.size:
        raise ValueError(f"length mismatch: {x.size} vs {x_exact.size}")
    ref = float(np.linalg.norm(x_exact))
    if ref == 0.0:
        raise ValueError("reference image is identically zero")
    return float(np.linalg.norm(x_exact - x)) / ref


def ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Mean local structural similarity over 8x8 uniform sliding windows.

    Dynamic range is taken as 1.0 (images in [0, 1]); stabilizers are
    C1 = 0.01^2 and C2 = 0.03^2, and the window statistics use uniform
    weights 1/64 (population normalization).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError(f"images must share a 2D shape, got {x.shape} vs {y.shape}")
    w = SSIM_WINDOW
    if min(x.shape) < w:
        raise ValueError(f"images must be at least {w}x{w}")

    def local_mean(a):
        # size-8 uniform filter window spans offsets [-4, 3]; restricting to
        # centers [4, M-4) leaves exactly the (M-7)x(N-7) fully-interior windows
        return uniform_filter(a, size=w, mode="constant")[
            w // 2 : x.shape[0] - w // 2 + 1, w // 2 : x.shape[1] - w // 2 + 1
        ]

    mx = local_mean(x)
    my = local_mean(y)
    sxx = local_mean(x * x) - mx * mx
    syy = local_mean(y * y) - my * my
    sxy = local_mean(x * y) - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (sxx + syy + SSIM_C2)
    return float(np.mean(num / den))


def density(C: np.ndarray) -> float:
    """Percentage of exactly nonzero entries."""
    C = np.asarray(C)
    if C.size == 0:
        return 0.0
    return 100.0 * float(np.count_nonzero(C)) / C.size


def compressibility(C: np.ndarray, threshold: float = 1e-4) -> float:
    """Percentage of entries with magnitude above ``threshold``."""
    C = np.asarray(C)
    if C.size == 0:
        return 0.0
    return 100.0 * float(np.count_nonzero(np.abs(C) > threshold)) / C.size


METRICS_COLUMNS = [
    "label",
    "iterations",
    "density_percent",
    "compressibility_percent",
    "re_percent",
    "ssim",
]


def append_metrics_csv(path, report: MetricsReport) -> None:
    """Append one report as a CSV row (header written when the file is new).

    Wall time is intentionally not persisted so identical runs produce
    byte-identical files.
    """
    path = str(path)
    try:
        with open(path) as f:
            has_header = f.readline().startswith(METRICS_COLUMNS[0])
    except FileNotFoundError:
        has_header = False
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if not has_header:
            w.writerow(METRICS_COLUMNS)
        w.writerow(
            [
                report.label,
                report.iterations,
                repr(report.density_percent),
                repr(report.compressibility_percent),
                repr(100.0 * report.re),
                repr(report.ssim),
            ]
        )
