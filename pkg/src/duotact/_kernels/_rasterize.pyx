# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled anti-aliased multiplicative disk rasterizer.

Arithmetic mirrors the numpy reference exactly; pixels provably fully
inside or outside the disk skip the subsample loop but take the same
numeric path (integer count times 1/ss^2).
"""

from libc.math cimport ceil, floor


def draw_disk(double[:, :, ::1] img, double cx, double cy, double radius,
              double cr, double cg, double cb, int supersample):
    """Multiply an anti-aliased disk of per-channel transmission into img."""
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    if radius <= 0.0:
        return
    cdef Py_ssize_t x0 = <Py_ssize_t>ceil(cx - radius - 0.5)
    cdef Py_ssize_t x1 = <Py_ssize_t>floor(cx + radius + 0.5)
    cdef Py_ssize_t y0 = <Py_ssize_t>ceil(cy - radius - 0.5)
    cdef Py_ssize_t y1 = <Py_ssize_t>floor(cy + radius + 0.5)
    if x0 < 0:
        x0 = 0
    if y0 < 0:
        y0 = 0
    if x1 > w - 1:
        x1 = w - 1
    if y1 > h - 1:
        y1 = h - 1
    if x1 < x0 or y1 < y0:
        return

    cdef int ss = supersample
    cdef double inv_ss = 1.0 / ss
    cdef double inv_area = 1.0 / (ss * ss)
    cdef double r2 = radius * radius
    # max subsample offset from the pixel center is below 0.7072 px
    cdef double rin = radius - 0.7072
    cdef double rin2 = rin * rin if rin > 0.0 else -1.0
    cdef double rout = radius + 0.7072
    cdef double rout2 = rout * rout

    cdef Py_ssize_t x, y
    cdef int i, j, count
    cdef double dxc, dyc, c2, sx, sy, dx2, dy2, cov, base
    for y in range(y0, y1 + 1):
        dyc = y - cy
        for x in range(x0, x1 + 1):
            dxc = x - cx
            c2 = dxc * dxc + dyc * dyc
            if c2 > rout2:
                continue
            if rin2 >= 0.0 and c2 < rin2:
                count = ss * ss
            else:
                count = 0
                for j in range(ss):
                    sy = (y - 0.5) + (j + 0.5) * inv_ss
                    dy2 = (sy - cy) * (sy - cy)
                    for i in range(ss):
                        sx = (x - 0.5) + (i + 0.5) * inv_ss
                        dx2 = (sx - cx) * (sx - cx)
                        if dy2 + dx2 <= r2:
                            count += 1
                if count == 0:
                    continue
            cov = count * inv_area
            base = 1.0 - cov
            img[y, x, 0] *= base + cov * cr
            img[y, x, 1] *= base + cov * cg
            img[y, x, 2] *= base + cov * cb
