"""Frequency analysis: 2-D DCT, diagonal band masks, patch grading, selection.

Patches are graded by a weighted log-energy of their type-II orthonormal
DCT coefficients. The N x N coefficient plane is partitioned into K
anti-diagonal bands; band k (0 = lowest frequencies) covers positions
with (2N/K) * k <= i + j < (2N/K) * (k + 1) and contributes with weight
2**k, so high-frequency content dominates the grade:

    G = sum_k 2**k * sum_c sum_{ij in band k} ln(|X_c[i, j]| + 1)

DCT input is the raw 8-bit channel on the [0, 255] scale, computed in
float64. Band membership is decided in exact integer arithmetic
(band = (i + j) * K // (2 N)) so boundary positions never drift with
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ArgumentError, InsufficientPatchesError
from .imageio import Patch


@lru_cache(maxsize=8)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal type-II DCT basis matrix D with D @ D.T == I."""
    if n < 1:
        raise ArgumentError(f"DCT size must be positive, got {n}")
    i = np.arange(n)
    u = i[:, None]
    d = np.cos(np.pi * (2 * i[None, :] + 1) * u / (2 * n))
    d *= np.sqrt(2.0 / n)
    d[0] = np.sqrt(1.0 / n)
    d.setflags(write=False)
    return d


def dct2(block: np.ndarray) -> np.ndarray:
    """2-D orthonormal DCT-II of a square block, as two 1-D passes."""
    x = _checked_block(block)
    d = dct_matrix(x.shape[0])
    return d @ x @ d.T


def idct2(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of dct2."""
    c = _checked_block(coeffs)
    d = dct_matrix(c.shape[0])
    return d.T @ c @ d


def _checked_block(block: np.ndarray) -> np.ndarray:
    x = np.asarray(block, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ArgumentError(f"expected a square 2-D block, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ArgumentError("block contains non-finite values")
    return x


@dataclass(frozen=True, eq=False)
class DctPatch:
    """Per-channel DCT coefficients of one patch, shape (n, n, 3) float64."""

    coeffs: np.ndarray


def dct_patch(patch: Patch) -> DctPatch:
    """DCT each channel of a patch on the raw [0, 255] scale."""
    px = patch.pixels
    n = px.shape[0]
    d = dct_matrix(n)
    out = np.empty((n, n, 3), dtype=np.float64)
    for c in range(3):
        out[:, :, c] = d @ px[:, :, c].astype(np.float64) @ d.T
    return DctPatch(out)


@dataclass(frozen=True, eq=False)
class BandFilterBank:
    """K binary anti-diagonal masks over an n x n coefficient plane.

    masks[k] is 1 exactly where (i + j) * k_bands // (2 n) == k, so the
    masks partition the plane: every position belongs to exactly one
    band. weights[i, j] == 2.0 ** band_index[i, j].
    """

    n: int
    k_bands: int
    masks: np.ndarray  # (k_bands, n, n) uint8
    band_index: np.ndarray  # (n, n) int64
    weights: np.ndarray  # (n, n) float64


def build_band_filter_bank(n: int, k_bands: int) -> BandFilterBank:
    if n < 1:
        raise ArgumentError(f"plane size must be positive, got {n}")
    if not 1 <= k_bands <= 2 * n - 1:
        raise ArgumentError(
            f"k_bands must be in [1, {2 * n - 1}] for n={n}, got {k_bands}"
        )
    i = np.arange(n)
    diag = i[:, None] + i[None, :]
    band_index = (diag * k_bands) // (2 * n)
    masks = np.zeros((k_bands, n, n), dtype=np.uint8)
    for k in range(k_bands):
        masks[k] = band_index == k
    weights = np.power(2.0, band_index.astype(np.float64))
    for arr in (masks, band_index, weights):
        arr.setflags(write=False)
    return BandFilterBank(n, k_bands, masks, band_index, weights)


def grade_patch(dct: DctPatch, bank: BandFilterBank) -> float:
    """Weighted log-magnitude grade of one patch.

    Per-channel sums run in fixed array order; the three channel totals
    are combined with math.fsum, so the grade is exactly invariant under
    channel permutation.
    """
    coeffs = dct.coeffs
    if coeffs.shape != (bank.n, bank.n, 3):
        raise ArgumentError(
            f"coefficient shape {coeffs.shape} does not match bank plane "
            f"({bank.n}, {bank.n}, 3)"
        )
    logmag = np.log1p(np.abs(coeffs))
    channel_totals = [float(np.sum(bank.weights * logmag[:, :, c])) for c in range(3)]
    return math.fsum(channel_totals)


@dataclass(frozen=True, eq=False)
class PatchSelection:
    """Result of extreme-patch selection.

    max_patches / min_patches are ordered by descending / ascending
    grade; ties break toward the lower linear index. grades[i] is the
    grade of the patch with linear index i.
    """

    grades: tuple
    max_patches: tuple
    min_patches: tuple
    max_indices: tuple
    min_indices: tuple


def rank_extremes(grades, k: int):
    """Indices of the k largest and k smallest grades.

    Ordering is by descending (respectively ascending) grade with ties
    broken toward the lower index, so equal-grade inputs select the
    earliest patches on both sides.
    """
    grades = list(grades)
    if k < 1:
        raise ArgumentError(f"k must be positive, got {k}")
    if len(grades) < 2 * k:
        raise InsufficientPatchesError(len(grades), 2 * k)
    order_max = sorted(range(len(grades)), key=lambda i: (-grades[i], i))
    order_min = sorted(range(len(grades)), key=lambda i: (grades[i], i))
    return tuple(order_max[:k]), tuple(order_min[:k])


def select_extreme_patches(patches: list[Patch], bank: BandFilterBank, k: int) -> PatchSelection:
    """Pick the k highest-graded and k lowest-graded patches."""
    grades = [grade_patch(dct_patch(p), bank) for p in patches]
    max_idx, min_idx = rank_extremes(grades, k)
    return PatchSelection(
        grades=tuple(grades),
        max_patches=tuple(patches[i] for i in max_idx),
        min_patches=tuple(patches[i] for i in min_idx),
        max_indices=max_idx,
        min_indices=min_idx,
    )
