"""Image perturbations: JPEG recompression, Gaussian blur, training augments.

Blur convention: one 1-D kernel sampled from exp(-t^2 / (2 sigma^2)) for
t in [-r, r] with r = ceil(3 sigma), normalized to sum 1, applied
separably per channel with clamp-to-edge borders, then rounded back to
8-bit. JPEG recompression round-trips through a real baseline encoder.

random_augment draws, in this fixed order: the JPEG coin, a quality
factor uniform on the integers {30..100}, the blur coin, a sigma uniform
on [0.1, 3.0]. All four draws happen on every call regardless of the
coin outcomes, so the generator advances identically whether or not a
perturbation fires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .imageio import RgbImage, decode_image, encode_jpeg


@dataclass(frozen=True)
class PerturbationSpec:
    """One eval-time perturbation: kind "jpeg" (param=quality) or "blur" (param=sigma)."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("jpeg", "blur"):
            raise ArgumentError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "jpeg":
            q = self.param
            if q != int(q) or not 1 <= q <= 100:
                raise ArgumentError(f"JPEG quality must be an integer in [1, 100], got {q}")
        elif not self.param > 0:
            raise ArgumentError(f"blur sigma must be positive, got {self.param}")

    def label(self) -> str:
        if self.kind == "jpeg":
            return f"jpeg_qf{int(self.param)}"
        return f"blur_sigma{self.param:g}"

    def apply(self, image: RgbImage) -> RgbImage:
        if self.kind == "jpeg":
            return jpeg_recompress(image, int(self.param))
        return gaussian_blur(image, float(self.param))


def jpeg_recompress(image: RgbImage, quality: int) -> RgbImage:
    """Encode at the given quality factor and decode back."""
    return decode_image(encode_jpeg(image, quality))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled, normalized 1-D Gaussian with radius ceil(3 sigma)."""
    if not sigma > 0:
        raise ArgumentError(f"sigma must be positive, got {sigma}")
    r = math.ceil(3.0 * sigma)
    t = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(image: RgbImage, sigma: float) -> RgbImage:
    k = gaussian_kernel(sigma)
    r = (len(k) - 1) // 2
    data = image.pixels.astype(np.float64)
    padded = np.pad(data, ((r, r), (0, 0), (0, 0)), mode="edge")
    rows = np.zeros_like(data)
    for off in range(len(k)):
        rows += k[off] * padded[off : off + data.shape[0]]
    padded = np.pad(rows, ((0, 0), (r, r), (0, 0)), mode="edge")
    out = np.zeros_like(data)
    for off in range(len(k)):
        out += k[off] * padded[:, off : off + data.shape[1]]
    out = np.clip(np.floor(out + 0.5), 0.0, 255.0).astype(np.uint8)
    return RgbImage(out)


def random_augment(image: RgbImage, rng: np.random.Generator, prob: float = 0.1) -> RgbImage:
    """Independently JPEG-compress and blur, each with probability `prob`."""
    if not 0.0 <= prob <= 1.0:
        raise ArgumentError(f"probability must be in [0, 1], got {prob}")
    do_jpeg = rng.random() < prob
    quality = int(rng.integers(30, 101))
    do_blur = rng.random() < prob
    sigma = float(rng.uniform(0.1, 3.0))
    out = image
    if do_jpeg:
        out = jpeg_recompress(out, quality)
    if do_blur:
        out = gaussian_blur(out, sigma)
    return out
