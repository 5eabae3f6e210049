"""Numpy reference implementation of the disk rasterizer.

Kept arithmetically identical to the compiled kernel: coverage is an
exact subsample count times 1/ss^2, and the multiplicative update is
``pixel *= (1 - cov) + cov * rgb`` evaluated in the same order.
"""

import math

import numpy as np


def draw_disk(img, cx, cy, radius, cr, cg, cb, supersample):
    """Multiply an anti-aliased disk of per-channel transmission into img.

    img : (H, W, 3) float64 array, modified in place.
    cx, cy : disk center in pixel-center coordinates.
    radius : disk radius in pixels.
    cr, cg, cb : transmission factors in [0, 1].
    supersample : subsamples per pixel axis.
    """
    if radius <= 0.0:
        return
    h, w = img.shape[0], img.shape[1]
    x0 = max(0, int(math.ceil(cx - radius - 0.5)))
    x1 = min(w - 1, int(math.floor(cx + radius + 0.5)))
    y0 = max(0, int(math.ceil(cy - radius - 0.5)))
    y1 = min(h - 1, int(math.floor(cy + radius + 0.5)))
    if x1 < x0 or y1 < y0:
        return

    ss = int(supersample)
    inv_ss = 1.0 / ss
    inv_area = 1.0 / (ss * ss)
    offsets = (np.arange(ss) + 0.5) * inv_ss

    xs = np.arange(x0, x1 + 1, dtype=float)
    ys = np.arange(y0, y1 + 1, dtype=float)
    sub_x = (xs - 0.5)[:, None] + offsets[None, :]
    sub_y = (ys - 0.5)[:, None] + offsets[None, :]
    dx2 = (sub_x - cx) ** 2
    dy2 = (sub_y - cy) ** 2

    inside = (
        dy2.reshape(-1)[:, None] + dx2.reshape(-1)[None, :]
    ) <= radius * radius
    count = inside.reshape(len(ys), ss, len(xs), ss).sum(axis=(1, 3))

    cov = count * inv_area
    rgb = np.array([cr, cg, cb])
    factor = (1.0 - cov)[:, :, None] + cov[:, :, None] * rgb[None, None, :]
    img[y0 : y1 + 1, x0 : x1 + 1, :] *= factor
