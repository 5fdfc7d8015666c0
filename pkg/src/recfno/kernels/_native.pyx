# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see pykernels for the contract)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "native"


def fft_stages_inplace(double complex[:, ::1] work, double complex[::1] tw):
    cdef Py_ssize_t n = work.shape[0]
    cdef Py_ssize_t b = work.shape[1]
    cdef Py_ssize_t half = 1
    cdef Py_ssize_t stride, r, j, col, i0, i1
    cdef double complex wj, t, u
    while half < n:
        stride = (n // 2) // half
        for r in range(0, n, 2 * half):
            for j in range(half):
                wj = tw[j * stride]
                i0 = r + j
                i1 = i0 + half
                for col in range(b):
                    t = wj * work[i1, col]
                    u = work[i0, col]
                    work[i0, col] = u + t
                    work[i1, col] = u - t
        half *= 2


def conv3x3_fwd(double[:, :, ::1] x, double[:, :, :, ::1] wt, double[::1] bias):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], ci = x.shape[2], co = wt.shape[3]
    out = np.empty((h, w, co), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t i, j, di, dj, a, bb, k, o
    cdef double acc
    for i in range(h):
        for j in range(w):
            for o in range(co):
                y[i, j, o] = bias[o]
            for di in range(3):
                a = i + di - 1
                if a < 0 or a >= h:
                    continue
                for dj in range(3):
                    bb = j + dj - 1
                    if bb < 0 or bb >= w:
                        continue
                    for k in range(ci):
                        acc = x[a, bb, k]
                        for o in range(co):
                            y[i, j, o] += acc * wt[di, dj, k, o]
    return out


def conv3x3_grad_x(double[:, :, ::1] gy, double[:, :, :, ::1] wt):
    cdef Py_ssize_t h = gy.shape[0], w = gy.shape[1], co = gy.shape[2], ci = wt.shape[2]
    out = np.zeros((h, w, ci), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t i, j, di, dj, a, bb, k, o
    cdef double g
    for i in range(h):
        for j in range(w):
            for di in range(3):
                a = i + di - 1
                if a < 0 or a >= h:
                    continue
                for dj in range(3):
                    bb = j + dj - 1
                    if bb < 0 or bb >= w:
                        continue
                    # y[i,j] was fed by x[a,bb] through wt[di,dj]; transpose it
                    for o in range(co):
                        g = gy[i, j, o]
                        for k in range(ci):
                            gx[a, bb, k] += g * wt[di, dj, k, o]
    return out


def conv3x3_grad_w(double[:, :, ::1] x, double[:, :, ::1] gy):
    cdef Py_ssize_t h = x.shape[0], w = x.shape[1], ci = x.shape[2], co = gy.shape[2]
    gw_arr = np.zeros((3, 3, ci, co), dtype=np.float64)
    gb_arr = np.zeros(co, dtype=np.float64)
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, j, di, dj, a, bb, k, o
    cdef double g
    for i in range(h):
        for j in range(w):
            for o in range(co):
                gb[o] += gy[i, j, o]
            for di in range(3):
                a = i + di - 1
                if a < 0 or a >= h:
                    continue
                for dj in range(3):
                    bb = j + dj - 1
                    if bb < 0 or bb >= w:
                        continue
                    for k in range(ci):
                        g = x[a, bb, k]
                        for o in range(co):
                            gw[di, dj, k, o] += g * gy[i, j, o]
    return gw_arr, gb_arr


cdef extern from "math.h":
    double erf(double) nogil
    double exp(double) nogil

cdef double _INV_SQRT2 = 0.7071067811865475244
cdef double _INV_SQRT_2PI = 0.3989422804014326779


def gelu_fwd(double[::1] x):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdf_out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double[::1] cdf = cdf_out
    for i in range(n):
        cdf[i] = 0.5 * (1.0 + erf(x[i] * _INV_SQRT2))
        y[i] = x[i] * cdf[i]
    return out, cdf_out


def gelu_bwd(double[::1] x, double[::1] cdf, double[::1] g):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] gx = out
    for i in range(n):
        gx[i] = g[i] * (cdf[i] + x[i] * exp(-0.5 * x[i] * x[i]) * _INV_SQRT_2PI)
    return out


def voronoi_assign(double[::1] gx, double[::1] gy, double[::1] sx, double[::1] sy):
    cdef Py_ssize_t w = gx.shape[0], h = gy.shape[0], n = sx.shape[0]
    out = np.empty((h, w), dtype=np.int64)
    cdef long long[:, ::1] idx = out
    cdef Py_ssize_t i, j, k
    cdef double best, d2, dx, dy
    cdef long long kbest
    for i in range(h):
        for j in range(w):
            kbest = 0
            dx = gx[j] - sx[0]
            dy = gy[i] - sy[0]
            best = dx * dx + dy * dy
            for k in range(1, n):
                dx = gx[j] - sx[k]
                dy = gy[i] - sy[k]
                d2 = dx * dx + dy * dy
                if d2 < best:
                    best = d2
                    kbest = k
            idx[i, j] = kbest
    return out


def scatter_add(double[:, :, ::1] gy, Py_ssize_t[::1] si, Py_ssize_t[::1] sj,
                Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t h2 = gy.shape[0], w2 = gy.shape[1], c = gy.shape[2]
    out = np.zeros((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] gx = out
    cdef Py_ssize_t i, j, k
    for i in range(h2):
        for j in range(w2):
            for k in range(c):
                gx[si[i], sj[j], k] += gy[i, j, k]
    return out
