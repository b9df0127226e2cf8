"""Reference conv kernels: strided window views plus BLAS contractions.

This is the always-available backend. aide.nn._native implements the
same two functions in compiled code; aide.nn.kernels picks one at
import time. Arguments arrive pre-validated as C-contiguous float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b, stride, pad):
    """Cross-correlate x (C,H,W) with w (O,C,kh,kw), add bias, stride/pad."""
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    y = np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))
    y += b[:, None, None]
    return np.ascontiguousarray(y)


def conv2d_backward(x, w, dy, stride, pad):
    """Gradients (dx, dw, db) of conv2d_forward wrt x, w, b."""
    c, h, wd = x.shape
    kh, kw = w.shape[2], w.shape[3]
    ho, wo = dy.shape[1], dy.shape[2]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]

    db = dy.sum(axis=(1, 2))
    dw = np.tensordot(dy, win, axes=([1, 2], [1, 2]))

    dxp = np.zeros_like(xp)
    for ki in range(kh):
        for kj in range(kw):
            contrib = np.tensordot(w[:, :, ki, kj], dy, axes=([0], [0]))
            dxp[:, ki : ki + stride * ho : stride, kj : kj + stride * wo : stride] += contrib
    dx = dxp[:, pad : pad + h, pad : pad + wd] if pad else dxp
    return np.ascontiguousarray(dx), dw, db
