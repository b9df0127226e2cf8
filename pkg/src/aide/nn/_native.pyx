# cython: language_level=3
# cython: boundscheck=False
# cython: wraparound=False
# cython: cdivision=True
"""Compiled conv kernels. Same contracts as aide.nn._fallback."""

import numpy as np


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] w, double[::1] b,
                   int stride, int pad):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - kw) // stride + 1

    xp_arr = np.zeros((C, H + 2 * pad, W + 2 * pad), dtype=np.float64)
    xp_arr[:, pad:pad + H, pad:pad + W] = np.asarray(x)
    cdef double[:, :, ::1] xp = xp_arr

    y_arr = np.empty((O, Ho, Wo), dtype=np.float64)
    y_arr[:] = np.asarray(b)[:, None, None]
    cdef double[:, :, ::1] y = y_arr

    cdef Py_ssize_t o, c, ki, kj, i, j, row
    cdef double wv
    for o in range(O):
        for c in range(C):
            for ki in range(kh):
                for kj in range(kw):
                    wv = w[o, c, ki, kj]
                    if wv == 0.0:
                        continue
                    for i in range(Ho):
                        row = i * stride + ki
                        for j in range(Wo):
                            y[o, i, j] += wv * xp[c, row, j * stride + kj]
    return y_arr


def conv2d_backward(double[:, :, ::1] x, double[:, :, :, ::1] w,
                    double[:, :, ::1] dy, int stride, int pad):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = dy.shape[1], Wo = dy.shape[2]

    xp_arr = np.zeros((C, H + 2 * pad, W + 2 * pad), dtype=np.float64)
    xp_arr[:, pad:pad + H, pad:pad + W] = np.asarray(x)
    cdef double[:, :, ::1] xp = xp_arr

    db_arr = np.zeros(O, dtype=np.float64)
    dw_arr = np.zeros((O, C, kh, kw), dtype=np.float64)
    dxp_arr = np.zeros_like(xp_arr)
    cdef double[::1] db = db_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[:, :, ::1] dxp = dxp_arr

    cdef Py_ssize_t o, c, ki, kj, i, j, row
    cdef double acc, g, wv
    for o in range(O):
        acc = 0.0
        for i in range(Ho):
            for j in range(Wo):
                acc += dy[o, i, j]
        db[o] = acc

    for o in range(O):
        for c in range(C):
            for ki in range(kh):
                for kj in range(kw):
                    acc = 0.0
                    for i in range(Ho):
                        row = i * stride + ki
                        for j in range(Wo):
                            acc += dy[o, i, j] * xp[c, row, j * stride + kj]
                    dw[o, c, ki, kj] = acc

    for o in range(O):
        for c in range(C):
            for ki in range(kh):
                for kj in range(kw):
                    wv = w[o, c, ki, kj]
                    if wv == 0.0:
                        continue
                    for i in range(Ho):
                        row = i * stride + ki
                        for j in range(Wo):
                            dxp[c, row, j * stride + kj] += wv * dy[o, i, j]

    if pad:
        dx = dxp_arr[:, pad:pad + H, pad:pad + W].copy()
    else:
        dx = dxp_arr
    return dx, dw_arr, db_arr
