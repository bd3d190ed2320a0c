"""Handcrafted descriptors: oriented-gradient histograms and cube aggregation.

Gradient-orientation convention: orientations are *gradient* directions
folded to [0, 180); bin i is centred on i * (180/bins) degrees, so a
horizontal intensity ramp (vertical edge, gradient at 0 degrees) votes
entirely into bin 0. Votes are magnitude-weighted and linearly
interpolated between the two nearest bin centres (circular in 180
degrees).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-6


@dataclass
class HogConfig:
    cell: int = 8  # pixels per cell side
    bins: int = 9  # unsigned orientation bins over [0, 180)
    block: int = 2  # cells per block side
    block_stride: int = 1  # cells between block origins
    clip: float = 0.2  # L2-Hys clipping threshold

    def validate(self, h: int, w: int):
        if self.bins < 2:
            raise ValueError(f"need >= 2 orientation bins, got {self.bins}")
        if h % self.cell or w % self.cell:
            raise ValueError(f"image {h}x{w} not divisible by cell size {self.cell}")

    def descriptor_length(self, h: int, w: int) -> int:
        self.validate(h, w)
        cy, cx = h // self.cell, w // self.cell
        by = (cy - self.block) // self.block_stride + 1
        bx = (cx - self.block) // self.block_stride + 1
        return by * bx * self.block * self.block * self.bins


def hog_extract(image: np.ndarray, cfg: HogConfig | None = None) -> np.ndarray:
    """Block-normalized oriented-gradient descriptor of a 2-D image.

    Central-difference gradients (one-sided at the borders), unsigned
    magnitude-weighted orientation voting with linear bin interpolation,
    then per-block L2-Hys normalization of concatenated cell histograms.
    """
    cfg = cfg or HogConfig()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {img.shape}")
    h, w = img.shape
    cfg.validate(h, w)

    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.arctan2(gy, gx), np.pi)  # gradient direction in [0, pi)

    # magnitude votes split between the two nearest bin centres
    pos = ang * cfg.bins / np.pi  # bin centres at integer positions
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    lo %= cfg.bins
    hi = (lo + 1) % cfg.bins

    cy, cx = h // cfg.cell, w // cfg.cell
    hist = np.zeros((cy, cx, cfg.bins))
    cell_row = np.arange(h) // cfg.cell
    cell_col = np.arange(w) // cfg.cell
    flat_cell = (cell_row[:, None] * cx + cell_col[None, :]).ravel()
    nb = cfg.bins
    hist_flat = np.bincount(
        flat_cell * nb + lo.ravel(), weights=(mag * (1.0 - frac)).ravel(), minlength=cy * cx * nb
    )
    hist_flat += np.bincount(
        flat_cell * nb + hi.ravel(), weights=(mag * frac).ravel(), minlength=cy * cx * nb
    )
    hist = hist_flat.reshape(cy, cx, nb)

    by = (cy - cfg.block) // cfg.block_stride + 1
    bx = (cx - cfg.block) // cfg.block_stride + 1
    out = np.empty((by, bx, cfg.block * cfg.block * nb))
    for i in range(by):
        for j in range(bx):
            r, c = i * cfg.block_stride, j * cfg.block_stride
            v = hist[r : r + cfg.block, c : c + cfg.block].ravel()
            v = v / np.sqrt((v * v).sum() + _EPS**2)
            v = np.minimum(v, cfg.clip)
            v = v / np.sqrt((v * v).sum() + _EPS**2)
            out[i, j] = v
    return out.ravel().astype(np.float32)


def har_aggregate(cube: np.ndarray) -> np.ndarray:
    """Project a (C, T, H, W) spatiotemporal cube to a 2-D energy map.

    Plain mean over the channel and time axes; linear and exact.
    """
    cube = np.asarray(cube)
    if cube.ndim != 4:
        raise ValueError(f"expected a 4-D (C,T,H,W) cube, got shape {cube.shape}")
    return cube.mean(axis=(0, 1))
