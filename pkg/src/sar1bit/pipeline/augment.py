"""Training-time augmentation for registered image pairs.

Geometric transforms (90-degree rotations, flips) apply identically to
both streams so the pair stays registered. Photometric transforms
(speckle, gamma, blur, brightness/contrast) apply by default to the
sign-quantized stream only, keeping the reconstruction target clean
(``photometric_both`` flips that). Random erasing always applies to the
sign-quantized stream alone. Outputs are clipped to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AugmentOptions:
    rot90_prob: float = 0.75
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    speckle_prob: float = 0.3
    speckle_var: tuple[float, float] = (0.005, 0.05)
    gamma_prob: float = 0.3
    gamma_range: tuple[float, float] = (0.7, 1.4)
    blur_prob: float = 0.2
    blur_sigma: tuple[float, float] = (0.3, 0.9)
    bc_prob: float = 0.3
    brightness: tuple[float, float] = (-0.08, 0.08)
    contrast: tuple[float, float] = (0.85, 1.15)
    erase_prob: float = 0.5
    erase_area: tuple[float, float] = (0.02, 0.15)
    erase_aspect: tuple[float, float] = (0.3, 3.3)
    erase_fill: float = 0.0
    photometric_both: bool = False

    @classmethod
    def from_config(cls, cfg) -> "AugmentOptions":
        return cls(
            rot90_prob=cfg["augment.rot90_prob"],
            hflip_prob=cfg["augment.hflip_prob"],
            vflip_prob=cfg["augment.vflip_prob"],
            speckle_prob=cfg["augment.speckle_prob"],
            speckle_var=cfg["augment.speckle_var"],
            gamma_prob=cfg["augment.gamma_prob"],
            gamma_range=cfg["augment.gamma_range"],
            blur_prob=cfg["augment.blur_prob"],
            blur_sigma=cfg["augment.blur_sigma"],
            bc_prob=cfg["augment.bc_prob"],
            brightness=cfg["augment.brightness"],
            contrast=cfg["augment.contrast"],
            erase_prob=cfg["augment.erase_prob"],
            erase_area=cfg["augment.erase_area"],
            erase_aspect=cfg["augment.erase_aspect"],
            erase_fill=cfg["augment.erase_fill"],
            photometric_both=cfg["augment.photometric_both"],
        )


IDENTITY = AugmentOptions(
    rot90_prob=0.0, hflip_prob=0.0, vflip_prob=0.0, speckle_prob=0.0,
    gamma_prob=0.0, blur_prob=0.0, bc_prob=0.0, erase_prob=0.0,
)


def rot90(img: np.ndarray, k: int) -> np.ndarray:
    return np.rot90(img, k).copy()


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-sample stream so augmentation order never changes results."""
    return np.random.default_rng([seed, epoch, index])


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img
    radius = max(1, int(np.ceil(2.5 * sigma)))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    pad = radius
    tmp = np.pad(img, ((pad, pad), (0, 0)), mode="reflect")
    tmp = np.apply_along_axis(lambda col: np.convolve(col, k, mode="valid"), 0, tmp)
    tmp = np.pad(tmp, ((0, 0), (pad, pad)), mode="reflect")
    return np.apply_along_axis(lambda row: np.convolve(row, k, mode="valid"), 1, tmp)


def erase_rect(img: np.ndarray, rng: np.random.Generator, area: tuple[float, float],
               aspect: tuple[float, float], fill: float) -> np.ndarray:
    """Erase a random rectangle of roughly the sampled area fraction."""
    h, w = img.shape
    frac = rng.uniform(*area)
    ratio = rng.uniform(*aspect)
    target_px = frac * h * w
    rect_w = int(np.clip(round(np.sqrt(target_px / ratio)), 1, w))
    rect_h = int(np.clip(round(target_px / rect_w), 1, h))
    top = int(rng.integers(0, h - rect_h + 1))
    left = int(rng.integers(0, w - rect_w + 1))
    out = img.copy()
    out[top : top + rect_h, left : left + rect_w] = fill
    return out


def _photometric(img: np.ndarray, rng: np.random.Generator, opts: AugmentOptions) -> np.ndarray:
    if rng.uniform() < opts.speckle_prob:
        var = rng.uniform(*opts.speckle_var)
        img = img * (1.0 + rng.normal(0.0, np.sqrt(var), size=img.shape))
    if rng.uniform() < opts.gamma_prob:
        g = rng.uniform(*opts.gamma_range)
        img = np.power(np.clip(img, 0.0, 1.0), g)
    if rng.uniform() < opts.blur_prob:
        img = gaussian_blur(img, rng.uniform(*opts.blur_sigma))
    if rng.uniform() < opts.bc_prob:
        c = rng.uniform(*opts.contrast)
        b = rng.uniform(*opts.brightness)
        img = img * c + b
    return np.clip(img, 0.0, 1.0)


def augment_pair(
    img16: np.ndarray, img1: np.ndarray, rng: np.random.Generator, opts: AugmentOptions
) -> tuple[np.ndarray, np.ndarray]:
    """Augment one registered pair; returns new arrays, inputs untouched."""
    img16 = np.asarray(img16, dtype=np.float32)
    img1 = np.asarray(img1, dtype=np.float32)

    if rng.uniform() < opts.rot90_prob:
        k = int(rng.integers(1, 4))
        img16, img1 = rot90(img16, k), rot90(img1, k)
    if rng.uniform() < opts.hflip_prob:
        img16, img1 = img16[:, ::-1].copy(), img1[:, ::-1].copy()
    if rng.uniform() < opts.vflip_prob:
        img16, img1 = img16[::-1, :].copy(), img1[::-1, :].copy()

    # one photometric stream; drawn even for the clean target so the
    # random sequence does not depend on photometric_both
    photo_rng = np.random.default_rng(rng.integers(0, 2**63 - 1, size=2))
    img1 = _photometric(img1, photo_rng, opts)
    if opts.photometric_both:
        photo_rng2 = np.random.default_rng(photo_rng.integers(0, 2**63 - 1, size=2))
        img16 = _photometric(img16, photo_rng2, opts)

    if rng.uniform() < opts.erase_prob:
        img1 = erase_rect(img1, rng, opts.erase_area, opts.erase_aspect, opts.erase_fill)

    return np.clip(img16, 0.0, 1.0).astype(np.float32), np.clip(img1, 0.0, 1.0).astype(np.float32)
