"""Conv kernel backend selection and argument validation.

Two interchangeable backends implement the raw conv arithmetic:

* aide.nn._fallback, strided numpy views plus BLAS contractions;
* aide.nn._native, the same contracts as plain compiled loops.

The numpy path is the default: benchmarks/bench_kernels.py times both,
and the BLAS contraction wins at every shape the encoder runs (roughly
3x on a whole training step). Set AIDE_BACKEND=native to run on the
compiled loops instead, e.g. to cross-check arithmetic with BLAS out of
the picture. The backends agree to 1e-12 elementwise but not bitwise;
their summation orders differ, so keep one backend per reproducibility
study.
"""

import os

import numpy as np

from ..errors import ArgumentError
from . import _fallback

_requested = os.environ.get("AIDE_BACKEND", "fallback").strip().lower()
if _requested in ("", "fallback"):
    _impl = _fallback
    BACKEND = "fallback"
elif _requested == "native":
    from . import _native as _impl  # ImportError here means the build failed

    BACKEND = "native"
else:
    raise ArgumentError(
        f"AIDE_BACKEND must be 'native' or 'fallback', got {_requested!r}"
    )


def backend_name() -> str:
    return BACKEND


def _as_c64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _check_geometry(x, w, b, stride, pad):
    if x.ndim != 3:
        raise ArgumentError(f"input must be (C, H, W), got shape {x.shape}")
    if w.ndim != 4:
        raise ArgumentError(f"weight must be (O, C, kh, kw), got shape {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ArgumentError(
            f"weight expects {w.shape[1]} input channels, input has {x.shape[0]}"
        )
    if b.shape != (w.shape[0],):
        raise ArgumentError(
            f"bias shape {b.shape} does not match {w.shape[0]} output channels"
        )
    if stride < 1:
        raise ArgumentError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ArgumentError(f"padding must be >= 0, got {pad}")
    ho = (x.shape[1] + 2 * pad - w.shape[2]) // stride + 1
    wo = (x.shape[2] + 2 * pad - w.shape[3]) // stride + 1
    if ho < 1 or wo < 1:
        raise ArgumentError(
            f"kernel {w.shape[2]}x{w.shape[3]} does not fit input "
            f"{x.shape[1]}x{x.shape[2]} with pad {pad}"
        )
    return ho, wo


def conv2d_forward(x, w, b, stride=1, pad=0):
    """y[o] = b[o] + sum_c cross_correlate(x[c], w[o, c]); shape (O, Ho, Wo)."""
    x, w, b = _as_c64(x), _as_c64(w), _as_c64(b)
    _check_geometry(x, w, b, stride, pad)
    return _impl.conv2d_forward(x, w, b, int(stride), int(pad))


def conv2d_backward(x, w, dy, stride=1, pad=0):
    """Gradients (dx, dw, db) given upstream dy of shape (O, Ho, Wo)."""
    x, w, dy = _as_c64(x), _as_c64(w), _as_c64(dy)
    ho, wo = _check_geometry(x, w, np.zeros(w.shape[0]), stride, pad)
    if dy.shape != (w.shape[0], ho, wo):
        raise ArgumentError(
            f"upstream gradient shape {dy.shape} does not match output "
            f"({w.shape[0]}, {ho}, {wo})"
        )
    return _impl.conv2d_backward(x, w, dy, int(stride), int(pad))
