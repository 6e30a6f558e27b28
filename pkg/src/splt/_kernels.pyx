# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: direct zero-normalized cross-correlation and fused
crop+bilinear resampling.

`bilinear_resize` mirrors the NumPy twin in `_kernels_np` operation for
operation so the two backends are bit-identical (the build disables FP
contraction for this reason). `ncc_direct` is the spatial-domain counterpart
of the FFT path; the two agree to ~1e-12.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

# Windows with sum-of-squared-deviations below this are treated as flat
# (zero correlation). Shared with the NumPy backend.
DEF VAR_EPS = 1e-9


def ncc_direct(double[:, ::1] region, double[:, ::1] template):
    """ZNCC response for every valid placement of `template` in `region`."""
    cdef Py_ssize_t rh = region.shape[0], rw = region.shape[1]
    cdef Py_ssize_t th = template.shape[0], tw = template.shape[1]
    cdef Py_ssize_t oh = rh - th + 1, ow = rw - tw + 1
    if oh < 1 or ow < 1:
        raise ValueError("template larger than region")

    out_arr = np.empty((oh, ow), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    cdef Py_ssize_t u, v, i, j
    cdef double n = <double>(th * tw)
    cdef double t_sum = 0.0, t_sq = 0.0, t_mean, t_ssd
    for i in range(th):
        for j in range(tw):
            t_sum += template[i, j]
            t_sq += template[i, j] * template[i, j]
    t_mean = t_sum / n
    t_ssd = t_sq - t_sum * t_sum / n
    if t_ssd < 0.0:
        t_ssd = 0.0

    cdef double r_sum, r_sq, rt, val, denom, ssd_r
    for u in range(oh):
        for v in range(ow):
            r_sum = 0.0
            r_sq = 0.0
            rt = 0.0
            for i in range(th):
                for j in range(tw):
                    val = region[u + i, v + j]
                    r_sum += val
                    r_sq += val * val
                    rt += val * template[i, j]
            ssd_r = r_sq - r_sum * r_sum / n
            if ssd_r < 0.0:
                ssd_r = 0.0
            if ssd_r <= VAR_EPS or t_ssd <= VAR_EPS:
                out[u, v] = 0.0
                continue
            denom = (ssd_r * t_ssd) ** 0.5
            val = (rt - t_mean * r_sum) / denom
            if val > 1.0:
                val = 1.0
            elif val < -1.0:
                val = -1.0
            out[u, v] = val
    return out_arr


def bilinear_resize(double[:, ::1] src, double x0, double y0,
                    double bw, double bh, Py_ssize_t out_h, Py_ssize_t out_w):
    """Resample the rect [x0, x0+bw) x [y0, y0+bh) of `src` to out_h x out_w.

    Pixel centres sit at integer+0.5; sampling clamps to the source border.
    """
    cdef Py_ssize_t sh = src.shape[0], sw = src.shape[1]
    if sh < 2 or sw < 2:
        raise ValueError("source must be at least 2x2")

    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    cdef double step_x = bw / out_w
    cdef double step_y = bh / out_h
    cdef Py_ssize_t i, j, ix, iy
    cdef double fx, fy, tx, ty, a, b, c, d, top, bot

    for i in range(out_h):
        fy = y0 + (i + 0.5) * step_y - 0.5
        if fy < 0.0:
            fy = 0.0
        if fy > sh - 1.0:
            fy = sh - 1.0
        iy = <Py_ssize_t>fy
        if iy > sh - 2:
            iy = sh - 2
        ty = fy - iy
        for j in range(out_w):
            fx = x0 + (j + 0.5) * step_x - 0.5
            if fx < 0.0:
                fx = 0.0
            if fx > sw - 1.0:
                fx = sw - 1.0
            ix = <Py_ssize_t>fx
            if ix > sw - 2:
                ix = sw - 2
            tx = fx - ix
            a = src[iy, ix]
            b = src[iy, ix + 1]
            c = src[iy + 1, ix]
            d = src[iy + 1, ix + 1]
            top = a + tx * (b - a)
            bot = c + tx * (d - c)
            out[i, j] = top + ty * (bot - top)
    return out_arr
