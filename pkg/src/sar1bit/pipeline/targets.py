"""Procedural reflectivity-map families, one per target class.

Each family draws a parameterized geometric shape with randomized pose,
scale and reflectivity onto an H x W map in [0, 1]. Shapes stay inside a
central disc so the simulated echoes remain inside the fast-time window.
"""

from __future__ import annotations

import numpy as np

FAMILY_NAMES = [
    "bar",
    "lshape",
    "twinblob",
    "ring",
    "cross",
    "wedge",
    "blobgrid",
    "arc",
    "tee",
    "chevron",
]

MAX_CLASSES = len(FAMILY_NAMES)
_MAX_OFFSET = 5  # pixels of random centre jitter
_MAX_RADIUS = 24  # shapes stay inside this radius around the map centre


def _grid(size: int, rng: np.random.Generator, angle: float | None = None):
    """Centred, jittered, rotated coordinate grid (u along the shape axis)."""
    cy = size / 2.0 - 0.5 + rng.uniform(-_MAX_OFFSET, _MAX_OFFSET)
    cx = size / 2.0 - 0.5 + rng.uniform(-_MAX_OFFSET, _MAX_OFFSET)
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy - cy
    dx = xx - cx
    if angle is None:
        angle = rng.uniform(0, np.pi)
    ca, sa = np.cos(angle), np.sin(angle)
    u = ca * dx + sa * dy
    v = -sa * dx + ca * dy
    return u, v, np.hypot(dx, dy)


def _weight(rng):
    return rng.uniform(0.55, 1.0)


def _bar(size, rng):
    u, v, r = _grid(size, rng)
    half_len = rng.uniform(10, 16)
    half_wid = rng.uniform(2.0, 3.5)
    return ((np.abs(u) <= half_len) & (np.abs(v) <= half_wid)) * _weight(rng)


def _lshape(size, rng):
    u, v, r = _grid(size, rng)
    arm1 = rng.uniform(9, 15)
    arm2 = rng.uniform(9, 15)
    wid = rng.uniform(2.0, 3.2)
    horiz = (u >= -wid) & (u <= arm1) & (np.abs(v) <= wid)
    vert = (np.abs(u) <= wid) & (v >= -wid) & (v <= arm2)
    return (horiz | vert) * _weight(rng)


def _twinblob(size, rng):
    u, v, r = _grid(size, rng)
    sep = rng.uniform(6, 10)
    r1 = rng.uniform(3.5, 5.5)
    r2 = rng.uniform(3.5, 5.5)
    b1 = np.hypot(u - sep, v) <= r1
    b2 = np.hypot(u + sep, v) <= r2
    out = np.zeros(u.shape)
    out[b1] = 1.0
    out[b2] = rng.uniform(0.3, 0.7)
    return out * _weight(rng)


def _ring(size, rng):
    u, v, r = _grid(size, rng, angle=0.0)
    rad = rng.uniform(9, 14)
    thick = rng.uniform(2.2, 3.5)
    rr = np.hypot(u, v)
    return (np.abs(rr - rad) <= thick) * _weight(rng)


def _cross(size, rng):
    u, v, r = _grid(size, rng)
    half_len = rng.uniform(9, 14)
    half_wid = rng.uniform(1.8, 3.0)
    a = (np.abs(u) <= half_len) & (np.abs(v) <= half_wid)
    b = (np.abs(v) <= half_len) & (np.abs(u) <= half_wid)
    return (a | b) * _weight(rng)


def _wedge(size, rng):
    u, v, r = _grid(size, rng)
    length = rng.uniform(13, 19)
    spread = rng.uniform(0.4, 0.65)
    inside = (u >= 0) & (u <= length) & (np.abs(v) <= spread * u)
    return inside * _weight(rng)


def _blobgrid(size, rng):
    u, v, r = _grid(size, rng)
    pitch = rng.uniform(6.5, 9)
    rad = rng.uniform(2.0, 3.0)
    out = np.zeros(u.shape, dtype=bool)
    for gy in (-1, 0, 1):
        for gx in (-1, 0, 1):
            out |= np.hypot(u - gx * pitch, v - gy * pitch) <= rad
    return out * _weight(rng)


def _arc(size, rng):
    u, v, r = _grid(size, rng)
    rad = rng.uniform(10, 15)
    thick = rng.uniform(2.2, 3.5)
    rr = np.hypot(u, v)
    half_plane = v >= 0
    return ((np.abs(rr - rad) <= thick) & half_plane) * _weight(rng)


def _tee(size, rng):
    u, v, r = _grid(size, rng)
    top = rng.uniform(9, 14)
    stem = rng.uniform(9, 15)
    wid = rng.uniform(1.8, 3.0)
    bar = (np.abs(u) <= top) & (np.abs(v) <= wid)
    leg = (np.abs(u) <= wid) & (v >= 0) & (v <= stem)
    return (bar | leg) * _weight(rng)


def _chevron(size, rng):
    u, v, r = _grid(size, rng)
    length = rng.uniform(10, 15)
    wid = rng.uniform(1.8, 3.0)
    a = (u >= 0) & (u <= length) & (np.abs(v - 0.8 * u) <= wid)
    b = (u >= 0) & (u <= length) & (np.abs(v + 0.8 * u) <= wid)
    return (a | b) * _weight(rng)


_BUILDERS = [_bar, _lshape, _twinblob, _ring, _cross, _wedge, _blobgrid, _arc, _tee, _chevron]


def make_target(class_index: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Random reflectivity map of the given class family, values in [0, 1]."""
    if not 0 <= class_index < MAX_CLASSES:
        raise ValueError(f"class index {class_index} outside 0..{MAX_CLASSES - 1}")
    out = _BUILDERS[class_index](size, rng).astype(np.float32)
    # clamp to the safe central disc (soft insurance against jitter pushing out)
    yy, xx = np.mgrid[0:size, 0:size]
    c = size / 2.0 - 0.5
    out[np.hypot(yy - c, xx - c) > _MAX_RADIUS + 2] = 0.0
    return np.clip(out, 0.0, 1.0)
