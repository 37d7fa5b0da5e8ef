"""View augmentations for representation grids (C, H, W).

The pipeline draws a random crop-resize, a coin-flip horizontal flip, and a
per-grid intensity jitter. All randomness comes from the caller's generator
so paired views and whole runs stay reproducible.
"""

from __future__ import annotations

import numpy as np

CROP_SCALE = (0.7, 1.0)
JITTER = (0.8, 1.2)
FLIP_PROB = 0.5


def resize_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Channel-wise bilinear resize of a (C, H, W) grid."""
    _, h, w = grid.shape
    ys = np.clip((np.arange(out_h) + 0.5) * h / out_h - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * w / out_w - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    tl = grid[:, y0[:, None], x0[None, :]]
    tr = grid[:, y0[:, None], x1[None, :]]
    bl = grid[:, y1[:, None], x0[None, :]]
    br = grid[:, y1[:, None], x1[None, :]]
    top = tl * (1 - wx) + tr * wx
    bot = bl * (1 - wx) + br * wx
    return top * (1 - wy) + bot * wy


def random_crop_resize(grid: np.ndarray, rng: np.random.Generator,
                       scale_range: tuple[float, float] = CROP_SCALE) -> np.ndarray:
    _, h, w = grid.shape
    s = rng.uniform(*scale_range)
    ch = max(1, int(round(s * h)))
    cw = max(1, int(round(s * w)))
    top = rng.integers(0, h - ch + 1)
    left = rng.integers(0, w - cw + 1)
    crop = grid[:, top:top + ch, left:left + cw]
    return resize_bilinear(crop, h, w)


def horizontal_flip(grid: np.ndarray) -> np.ndarray:
    return grid[:, :, ::-1].copy()


def scale_jitter(grid: np.ndarray, rng: np.random.Generator,
                 jitter_range: tuple[float, float] = JITTER) -> np.ndarray:
    return grid * rng.uniform(*jitter_range)


def augment_view(grid: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One randomly augmented view of a grid (crop-resize, flip, jitter)."""
    out = random_crop_resize(np.asarray(grid, np.float64), rng)
    if rng.random() < FLIP_PROB:
        out = horizontal_flip(out)
    return scale_jitter(out, rng)
