"""Image decoding, resizing, and tiling into the patch grid.

The raster model is 8-bit RGB throughout: pixel arrays have shape
(height, width, 3), dtype uint8, row-major. PNG and baseline JPEG are
the only supported containers. Codec work is delegated to Pillow, but
all geometry (resampling, tiling) is implemented here so the sampling
conventions stay pinned and testable.

Resampling conventions:

* nearest: source index = floor((dst + 0.5) * scale), clamped to the
  last valid index.
* bilinear: half-pixel centers, src = (dst + 0.5) * scale - 0.5,
  edge-clamped, separable over rows then columns, computed in float64
  and rounded half-away-from-zero back to uint8.
"""

from __future__ import annotations

import io
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    ArgumentError,
    DecodeError,
    EmptyPatchGridError,
    UnsupportedFormatError,
)

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
JPEG_MAGIC = b"\xff\xd8"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """A decoded 8-bit RGB raster. `pixels` has shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ArgumentError(
                f"expected (H, W, 3) uint8 pixels, got shape {px.shape} dtype {px.dtype}"
            )
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ArgumentError("image must be at least 1x1")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class Patch:
    """One n-by-n tile cut from an image.

    `linear_index` is the row-major position in the patch grid, so
    linear_index == grid_row * patches_per_row + grid_col.
    """

    grid_row: int
    grid_col: int
    linear_index: int
    pixels: np.ndarray


def sniff_format(data: bytes) -> str:
    """Return "png" or "jpeg" from magic bytes, else raise."""
    if data[: len(PNG_MAGIC)] == PNG_MAGIC:
        return "png"
    if data[: len(JPEG_MAGIC)] == JPEG_MAGIC:
        return "jpeg"
    head = data[:8].hex() if data else "<empty>"
    raise UnsupportedFormatError(
        f"not a PNG or JPEG stream (leading bytes {head})"
    )


def decode_image(data: bytes) -> RgbImage:
    """Decode PNG or JPEG bytes into an RgbImage.

    Grayscale and palette images are expanded to RGB. Alpha channels
    and high-bit-depth rasters are rejected. Corrupt streams raise
    DecodeError carrying a byte offset of the first structural
    inconsistency the container walk can find.
    """
    kind = sniff_format(data)
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "P"):
                im = im.convert("RGB")
            elif mode != "RGB":
                raise UnsupportedFormatError(
                    f"unsupported pixel mode {mode!r}; only 8-bit RGB, grayscale, "
                    "and palette images are accepted"
                )
            px = np.asarray(im, dtype=np.uint8)
    except UnsupportedFormatError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        offset = _corruption_offset(data, kind)
        raise DecodeError(f"failed to decode {kind} stream: {exc}", offset) from exc
    return RgbImage(px)


def encode_png(image: RgbImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, "RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_jpeg(image: RgbImage, quality: int) -> bytes:
    """Encode as baseline JPEG at an integer quality factor in [1, 100]."""
    if not 1 <= int(quality) <= 100:
        raise ArgumentError(f"JPEG quality must be in [1, 100], got {quality}")
    buf = io.BytesIO()
    Image.fromarray(image.pixels, "RGB").save(buf, format="JPEG", quality=int(quality))
    return buf.getvalue()


def load_image(path) -> RgbImage:
    """Read a .png/.jpg/.jpeg file, verifying extension against magic bytes."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext not in (".png", ".jpg", ".jpeg"):
        raise UnsupportedFormatError(f"unsupported file extension {ext!r}: {path}")
    data = path.read_bytes()
    kind = sniff_format(data)
    expected = "png" if ext == ".png" else "jpeg"
    if kind != expected:
        raise UnsupportedFormatError(
            f"extension {ext!r} does not match stream content ({kind}): {path}"
        )
    return decode_image(data)


def save_image(image: RgbImage, path) -> None:
    """Write PNG or JPEG (quality 95) according to the file extension."""
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".png":
        path.write_bytes(encode_png(image))
    elif ext in (".jpg", ".jpeg"):
        path.write_bytes(encode_jpeg(image, 95))
    else:
        raise UnsupportedFormatError(f"unsupported file extension {ext!r}: {path}")


def resize_image(image: RgbImage, width: int, height: int, method: str = "bilinear") -> RgbImage:
    """Resample to width x height with "bilinear" or "nearest"."""
    if width < 1 or height < 1:
        raise ArgumentError(f"target size must be positive, got {width}x{height}")
    if method == "nearest":
        out = _resize_nearest(image.pixels, width, height)
    elif method == "bilinear":
        out = _resize_bilinear(image.pixels, width, height)
    else:
        raise ArgumentError(f"unknown resize method {method!r}")
    return RgbImage(out)


def _resize_nearest(px: np.ndarray, width: int, height: int) -> np.ndarray:
    src_h, src_w = px.shape[:2]
    rows = np.floor((np.arange(height) + 0.5) * (src_h / height)).astype(np.int64)
    cols = np.floor((np.arange(width) + 0.5) * (src_w / width)).astype(np.int64)
    rows = np.minimum(rows, src_h - 1)
    cols = np.minimum(cols, src_w - 1)
    return px[rows][:, cols]


def _axis_samples(dst_n: int, src_n: int):
    # half-pixel centers, edge clamped
    x = (np.arange(dst_n) + 0.5) * (src_n / dst_n) - 0.5
    x = np.clip(x, 0.0, float(src_n - 1))
    i0 = np.floor(x).astype(np.int64)
    i1 = np.minimum(i0 + 1, src_n - 1)
    frac = x - i0
    return i0, i1, frac


def _resize_bilinear(px: np.ndarray, width: int, height: int) -> np.ndarray:
    src_h, src_w = px.shape[:2]
    r0, r1, rf = _axis_samples(height, src_h)
    c0, c1, cf = _axis_samples(width, src_w)
    data = px.astype(np.float64)
    rows = data[r0] * (1.0 - rf)[:, None, None] + data[r1] * rf[:, None, None]
    out = rows[:, c0] * (1.0 - cf)[None, :, None] + rows[:, c1] * cf[None, :, None]
    out = np.floor(out + 0.5)  # round half away from zero; values are non-negative
    return np.clip(out, 0.0, 255.0).astype(np.uint8)


def patchify(image: RgbImage, n: int) -> list[Patch]:
    """Tile into non-overlapping n x n patches, row-major, dropping remainders."""
    if n < 1:
        raise ArgumentError(f"patch size must be positive, got {n}")
    rows = image.height // n
    cols = image.width // n
    if rows == 0 or cols == 0:
        raise EmptyPatchGridError(
            f"image {image.width}x{image.height} is smaller than one {n}x{n} patch"
        )
    patches = []
    for r in range(rows):
        for c in range(cols):
            tile = image.pixels[r * n : (r + 1) * n, c * n : (c + 1) * n].copy()
            patches.append(Patch(r, c, r * cols + c, tile))
    return patches


def _corruption_offset(data: bytes, kind: str):
    if kind == "png":
        return _png_corruption_offset(data)
    return _jpeg_corruption_offset(data)


def _png_corruption_offset(data: bytes):
    """Walk the chunk structure and report where it stops making sense."""
    pos = len(PNG_MAGIC)
    n = len(data)
    first_idat = None
    while pos + 8 <= n:
        length = int.from_bytes(data[pos : pos + 4], "big")
        ctype = data[pos + 4 : pos + 8]
        if not all(65 <= b <= 122 for b in ctype):
            return pos + 4
        end = pos + 8 + length + 4
        if end > n:
            return min(n, pos + 8 + length)
        crc = int.from_bytes(data[end - 4 : end], "big")
        if zlib.crc32(data[pos + 4 : end - 4]) & 0xFFFFFFFF != crc:
            return pos + 8
        if ctype == b"IDAT" and first_idat is None:
            first_idat = pos + 8
        if ctype == b"IEND":
            # structure is intact; blame the compressed payload
            return first_idat if first_idat is not None else pos
        pos = end
    return min(pos, n)


def _jpeg_corruption_offset(data: bytes):
    """Walk marker segments and report where the stream breaks."""
    pos = 2
    n = len(data)
    while pos + 2 <= n:
        if data[pos] != 0xFF:
            return pos
        marker = data[pos + 1]
        if marker == 0xD9:  # EOI
            return n
        if marker == 0x01 or 0xD0 <= marker <= 0xD7:
            pos += 2
            continue
        if pos + 4 > n:
            return pos + 2
        seglen = int.from_bytes(data[pos + 2 : pos + 4], "big")
        if seglen < 2 or pos + 2 + seglen > n:
            return pos + 2
        pos += 2 + seglen
        if marker == 0xDA:  # start of scan: skip entropy-coded bytes
            while pos + 1 < n:
                if data[pos] == 0xFF and data[pos + 1] != 0x00 and not (
                    0xD0 <= data[pos + 1] <= 0xD7
                ):
                    break
                pos += 1
            else:
                return n  # ran off the end inside scan data
    return min(pos, n)
