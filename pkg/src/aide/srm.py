"""Noise-residual extraction with fixed high-pass filters.

Three 5x5 integer-valued high-pass kernels (each divided by its own
normalizer) are cross-correlated with every channel of an image scaled
to [0, 1]. For each kernel the three per-channel responses are averaged
into one output channel, then truncated to [-t, t]. The kernels respond
to local noise structure and null out constant regions exactly.

Correlation runs on the integer pixel values in float64 (exact integer
arithmetic), and the division by 255 * normalizer happens once at the
end, so a constant image yields a residual that is exactly zero
everywhere. Borders are handled by replicating edge pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError
from .imageio import RgbImage

# fmt: off
_KERNEL_1 = [
    [0,  0,  0,  0, 0],
    [0, -1,  2, -1, 0],
    [0,  2, -4,  2, 0],
    [0, -1,  2, -1, 0],
    [0,  0,  0,  0, 0],
]
_KERNEL_2 = [
    [-1,  2,  -2,  2, -1],
    [ 2, -6,   8, -6,  2],
    [-2,  8, -12,  8, -2],
    [ 2, -6,   8, -6,  2],
    [-1,  2,  -2,  2, -1],
]
_KERNEL_3 = [
    [0, 0,  0, 0, 0],
    [0, 0,  0, 0, 0],
    [0, 1, -2, 1, 0],
    [0, 0,  0, 0, 0],
    [0, 0,  0, 0, 0],
]
# fmt: on

DEFAULT_KERNELS = (
    (_KERNEL_1, 4.0),
    (_KERNEL_2, 12.0),
    (_KERNEL_3, 2.0),
)


@dataclass(frozen=True, eq=False)
class SrmKernelSet:
    """A set of (integer 5x5 matrix, normalizer) high-pass filters plus clamp."""

    kernels: tuple
    clamp_t: float = 2.0

    def __post_init__(self):
        if not self.kernels:
            raise ArgumentError("kernel set must contain at least one kernel")
        if not self.clamp_t > 0:
            raise ArgumentError(f"clamp threshold must be positive, got {self.clamp_t}")
        checked = []
        for idx, (matrix, norm) in enumerate(self.kernels):
            m = np.asarray(matrix, dtype=np.int64)
            if m.shape != (5, 5):
                raise ArgumentError(f"kernel {idx} must be 5x5, got shape {m.shape}")
            if int(m.sum()) != 0:
                raise ArgumentError(
                    f"kernel {idx} entries sum to {int(m.sum())}, expected 0"
                )
            if not float(norm) > 0:
                raise ArgumentError(f"kernel {idx} normalizer must be positive")
            m.setflags(write=False)
            checked.append((m, float(norm)))
        object.__setattr__(self, "kernels", tuple(checked))


def default_kernel_set(clamp_t: float = 2.0) -> SrmKernelSet:
    return SrmKernelSet(DEFAULT_KERNELS, clamp_t)


def srm_residual(image: RgbImage, kernel_set: SrmKernelSet | None = None) -> np.ndarray:
    """Residual tensor of shape (H, W, 3): one channel per kernel.

    Output channel q is the mean over input channels of the kernel-q
    correlation on [0, 1]-scaled pixels, clamped to [-t, t].
    """
    if kernel_set is None:
        kernel_set = default_kernel_set()
    if len(kernel_set.kernels) != 3:
        raise ArgumentError(
            f"residual tensor is defined for exactly 3 kernels, got {len(kernel_set.kernels)}"
        )
    h, w = image.height, image.width
    if h < 5 or w < 5:
        raise ArgumentError(f"image must be at least 5x5 for 5x5 kernels, got {w}x{h}")
    px = image.pixels.astype(np.float64)
    padded = np.pad(px, ((2, 2), (2, 2), (0, 0)), mode="edge")
    # windows: (H, W, 3, 5, 5); integer-valued float64, so sums are exact
    windows = sliding_window_view(padded, (5, 5), axis=(0, 1))
    out = np.empty((h, w, 3), dtype=np.float64)
    t = kernel_set.clamp_t
    for q, (matrix, norm) in enumerate(kernel_set.kernels):
        acc = np.tensordot(windows, matrix.astype(np.float64), axes=([3, 4], [0, 1]))
        resp = acc.sum(axis=2) / (3.0 * 255.0 * norm)
        out[:, :, q] = np.clip(resp, -t, t)
    return out
