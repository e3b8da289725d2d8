# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled compositing kernels; see _rast_np.py for the reference semantics."""

from libc.math cimport ceil, exp, floor

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double Q_MAX = 9.0
cdef double MIN_CONTRIB = 1.0 / 255.0
cdef double T_STOP = 1e-4


def composite(double[:, ::1] mean2d, double[:, ::1] cov_inv, double[::1] radius,
              double[::1] alpha, double[:, ::1] color,
              int width, int height, double[::1] background):
    img_arr = np.zeros((height, width, 3), dtype=np.float64)
    trans_arr = np.ones((height, width), dtype=np.float64)
    cdef double[:, :, ::1] img = img_arr
    cdef double[:, ::1] trans = trans_arr
    cdef Py_ssize_t s, x, y, n = mean2d.shape[0]
    cdef int x0, x1, y0, y1
    cdef double x0d, x1d, y0d, y1d
    cdef double mx, my, r, a, b, c, dx, dy, q, w, t, tw

    for s in range(n):
        mx = mean2d[s, 0]
        my = mean2d[s, 1]
        r = radius[s]
        x0d = ceil(mx - r)
        x1d = floor(mx + r)
        y0d = ceil(my - r)
        y1d = floor(my + r)
        if x0d < 0:
            x0d = 0
        if y0d < 0:
            y0d = 0
        if x1d > width - 1:
            x1d = width - 1
        if y1d > height - 1:
            y1d = height - 1
        if x0d > x1d or y0d > y1d:
            continue
        x0 = <int>x0d
        x1 = <int>x1d
        y0 = <int>y0d
        y1 = <int>y1d
        a = cov_inv[s, 0]
        b = cov_inv[s, 1]
        c = cov_inv[s, 2]
        for y in range(y0, y1 + 1):
            dy = y - my
            for x in range(x0, x1 + 1):
                dx = x - mx
                q = a * dx * dx + 2.0 * b * dy * dx + c * dy * dy
                if q > Q_MAX:
                    continue
                w = alpha[s] * exp(-0.5 * q)
                if w < MIN_CONTRIB:
                    continue
                t = trans[y, x]
                if t < T_STOP:
                    continue
                tw = t * w
                img[y, x, 0] += tw * color[s, 0]
                img[y, x, 1] += tw * color[s, 1]
                img[y, x, 2] += tw * color[s, 2]
                trans[y, x] = t * (1.0 - w)

    for y in range(height):
        for x in range(width):
            t = trans[y, x]
            img[y, x, 0] += t * background[0]
            img[y, x, 1] += t * background[1]
            img[y, x, 2] += t * background[2]
    return img_arr


def composite_weights(double[:, ::1] mean2d, double[:, ::1] cov_inv, double[::1] radius,
                      double[::1] alpha, double[:, ::1] color,
                      int width, int height, double[::1] background):
    img_arr = np.zeros((height, width, 3), dtype=np.float64)
    trans_arr = np.ones((height, width), dtype=np.float64)
    cdef double[:, :, ::1] img = img_arr
    cdef double[:, ::1] trans = trans_arr
    cdef Py_ssize_t s, x, y, n = mean2d.shape[0]
    cdef int x0, x1, y0, y1
    cdef double x0d, x1d, y0d, y1d
    cdef double mx, my, r, a, b, c, dx, dy, q, w, t, tw
    cdef list pix_out = []
    cdef list splat_out = []
    cdef list w_out = []

    for s in range(n):
        mx = mean2d[s, 0]
        my = mean2d[s, 1]
        r = radius[s]
        x0d = ceil(mx - r)
        x1d = floor(mx + r)
        y0d = ceil(my - r)
        y1d = floor(my + r)
        if x0d < 0:
            x0d = 0
        if y0d < 0:
            y0d = 0
        if x1d > width - 1:
            x1d = width - 1
        if y1d > height - 1:
            y1d = height - 1
        if x0d > x1d or y0d > y1d:
            continue
        x0 = <int>x0d
        x1 = <int>x1d
        y0 = <int>y0d
        y1 = <int>y1d
        a = cov_inv[s, 0]
        b = cov_inv[s, 1]
        c = cov_inv[s, 2]
        for y in range(y0, y1 + 1):
            dy = y - my
            for x in range(x0, x1 + 1):
                dx = x - mx
                q = a * dx * dx + 2.0 * b * dy * dx + c * dy * dy
                if q > Q_MAX:
                    continue
                w = alpha[s] * exp(-0.5 * q)
                if w < MIN_CONTRIB:
                    continue
                t = trans[y, x]
                if t < T_STOP:
                    continue
                tw = t * w
                img[y, x, 0] += tw * color[s, 0]
                img[y, x, 1] += tw * color[s, 1]
                img[y, x, 2] += tw * color[s, 2]
                trans[y, x] = t * (1.0 - w)
                pix_out.append(y * width + x)
                splat_out.append(s)
                w_out.append(tw)

    for y in range(height):
        for x in range(width):
            t = trans[y, x]
            img[y, x, 0] += t * background[0]
            img[y, x, 1] += t * background[1]
            img[y, x, 2] += t * background[2]
    return (img_arr,
            np.asarray(pix_out, dtype=np.int64),
            np.asarray(splat_out, dtype=np.int64),
            np.asarray(w_out, dtype=np.float64))


def fill_ellipses(double[:, ::1] mean2d, double[:, ::1] cov_inv, double[::1] radius,
                  int width, int height):
    mask_arr = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] mask = mask_arr
    cdef Py_ssize_t s, x, y, n = mean2d.shape[0]
    cdef int x0, x1, y0, y1
    cdef double x0d, x1d, y0d, y1d
    cdef double mx, my, r, a, b, c, dx, dy, q

    for s in range(n):
        mx = mean2d[s, 0]
        my = mean2d[s, 1]
        r = radius[s]
        x0d = ceil(mx - r)
        x1d = floor(mx + r)
        y0d = ceil(my - r)
        y1d = floor(my + r)
        if x0d < 0:
            x0d = 0
        if y0d < 0:
            y0d = 0
        if x1d > width - 1:
            x1d = width - 1
        if y1d > height - 1:
            y1d = height - 1
        if x0d > x1d or y0d > y1d:
            continue
        x0 = <int>x0d
        x1 = <int>x1d
        y0 = <int>y0d
        y1 = <int>y1d
        a = cov_inv[s, 0]
        b = cov_inv[s, 1]
        c = cov_inv[s, 2]
        for y in range(y0, y1 + 1):
            dy = y - my
            for x in range(x0, x1 + 1):
                dx = x - mx
                q = a * dx * dx + 2.0 * b * dy * dx + c * dy * dy
                if q <= Q_MAX:
                    mask[y, x] = 1
    return mask_arr
