"""Deterministic synthetic textures for experiments and fixtures.

Stands in for photographic training material: a quasi-periodic woven field
with repeating local structure, so patch dictionaries learned on one crop
generalize to others.  Everything is a pure function of the arguments.
"""

from __future__ import annotations

import numpy as np

__all__ = ["woven_texture", "pulse_texture", "texture_pair"]


def woven_texture(
    rows: int,
    cols: int,
    period: int = 8,
    offset: tuple[int, int] = (0, 0),
    seed: int = 0,
) -> np.ndarray:
    """A textured field in [0, 1] with dominant spatial period ``period``.

    ``offset`` shifts the sampling window across the underlying infinite
    field, which is how disjoint train/test crops are produced.  The seed
    only perturbs the phases, keeping the texture family fixed.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    ph = rng.uniform(0.0, 2.0 * np.pi, size=4)
    oy, ox = offset
    y = (np.arange(rows) + oy)[:, None].astype(np.float64)
    x = (np.arange(cols) + ox)[None, :].astype(np.float64)
    w = 2.0 * np.pi / period
    f = (
        np.sin(w * y + 1.2 * np.sin(w * x + ph[0]) + ph[1])
        + 0.6 * np.sin(w * x + ph[2])
        + 0.3 * np.sin(0.25 * w * (x + y) + ph[3])
    )
    # sharpen so the weave has edges a quadratic penalty cannot mimic
    f = np.tanh(1.5 * f)
    lo, hi = f.min(), f.max()
    return 0.05 + 0.9 * (f - lo) / (hi - lo)


def pulse_texture(
    rows: int,
    cols: int,
    period: int = 8,
    offset: tuple[int, int] = (0, 0),
    seed: int = 0,
) -> np.ndarray:
    """A sharp pulse train with exact horizontal period, sheared vertically.

    The motif repeats every ``period`` columns exactly, so every horizontal
    cyclic shift of a patch is another patch of the same field; the pulses
    are narrow (high-frequency) and ride on smooth vertical amplitude and
    brightness modulations.  Edge-rich enough that quadratic smoothing
    priors blur it, yet built from few distinct local motifs.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    ph = rng.uniform(0.0, 2.0 * np.pi, size=2)
    oy, ox = offset
    y = (np.arange(rows) + oy)[:, None].astype(np.float64)
    x = (np.arange(cols) + ox)[None, :].astype(np.float64)

    def circ_dist(u, c):
        d = np.mod(u - c, period)
        return np.minimum(d, period - d)

    shear = np.floor(y / 3.0)  # integer shear keeps the horizontal period exact
    u = x + shear
    g = np.exp(-circ_dist(u, 0.0) ** 2 / 0.6) + 0.65 * np.exp(
        -circ_dist(u, period * 0.45) ** 2 / 1.8
    )
    amp = 0.72 + 0.28 * np.sin(2.0 * np.pi * y / 32.0 + ph[0])
    base = 0.16 + 0.12 * np.sin(2.0 * np.pi * y / 16.0 + ph[1])
    f = amp * g + base
    lo, hi = f.min(), f.max()
    return 0.05 + 0.9 * (f - lo) / (hi - lo)


_KINDS = {"woven": woven_texture, "pulse": pulse_texture}


def texture_pair(
    train_shape: tuple[int, int],
    exact_shape: tuple[int, int],
    period: int = 8,
    seed: int = 0,
    kind: str = "woven",
) -> tuple[np.ndarray, np.ndarray]:
    """A (training, exact) image pair cut from disjoint regions of the same
    field, so the exact image is never part of the training data."""
    make = _KINDS[kind]
    train = make(*train_shape, period=period, offset=(0, 0), seed=seed)
    gap = 3 * period + 1  # misaligned with the period so crops never coincide
    exact = make(
        *exact_shape, period=period, offset=(train_shape[0] + gap, gap), seed=seed
    )
    return train, exact
