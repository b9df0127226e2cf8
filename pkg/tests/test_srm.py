"""Noise-residual extractor: exact arithmetic and oracle checks."""

import numpy as np
import pytest
from scipy import ndimage

from aide.errors import ArgumentError
from aide.imageio import RgbImage
from aide.srm import DEFAULT_KERNELS, SrmKernelSet, default_kernel_set, srm_residual


def scipy_residual(pixels, kernel_set):
    """Independent implementation via scipy correlate with edge replication."""
    x = pixels.astype(np.float64)
    out = np.empty(pixels.shape[:2] + (len(kernel_set.kernels),))
    for k, (matrix, norm) in enumerate(kernel_set.kernels):
        acc = np.zeros(pixels.shape[:2])
        for c in range(3):
            acc += ndimage.correlate(x[:, :, c], matrix.astype(np.float64), mode="nearest")
        out[:, :, k] = acc / (3.0 * 255.0 * norm)
    t = kernel_set.clamp_t
    return np.clip(out, -t, t)


def random_image(seed, h=40, w=40):
    rng = np.random.default_rng(seed)
    return RgbImage(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


class TestKernelSet:
    def test_default_set(self):
        ks = default_kernel_set()
        assert len(ks.kernels) == 3
        assert ks.clamp_t == 2.0
        norms = [norm for _, norm in ks.kernels]
        assert norms == [4.0, 12.0, 2.0]
        for matrix, _ in ks.kernels:
            assert matrix.shape == (5, 5)
            assert int(matrix.sum()) == 0

    def test_custom_clamp(self):
        assert default_kernel_set(clamp_t=0.5).clamp_t == 0.5

    def test_kernels_are_read_only(self):
        matrix, _ = default_kernel_set().kernels[0]
        with pytest.raises(ValueError):
            matrix[0, 0] = 9

    def test_rejects_wrong_shape(self):
        with pytest.raises(ArgumentError):
            SrmKernelSet((([[1, -1], [0, 0]], 1.0),))

    def test_rejects_nonzero_sum(self):
        bad = [[0] * 5 for _ in range(5)]
        bad[2][2] = 1
        with pytest.raises(ArgumentError):
            SrmKernelSet(((bad, 1.0),))

    def test_rejects_bad_normalizer(self):
        matrix, _ = DEFAULT_KERNELS[0]
        with pytest.raises(ArgumentError):
            SrmKernelSet(((matrix, 0.0),))

    def test_rejects_empty(self):
        with pytest.raises(ArgumentError):
            SrmKernelSet(())

    def test_rejects_bad_clamp(self):
        with pytest.raises(ArgumentError):
            SrmKernelSet(DEFAULT_KERNELS, clamp_t=-1.0)


class TestResidual:
    def test_constant_image_exactly_zero(self):
        ks = default_kernel_set()
        for value in (0, 1, 100, 200, 255):
            img = RgbImage(np.full((12, 17, 3), value, dtype=np.uint8))
            res = srm_residual(img, ks)
            assert res.shape == (12, 17, 3)
            assert np.all(res == 0.0)

    def test_impulse_center_is_minus_one_for_every_kernel(self):
        # center tap / normalizer is -1 for all three filters
        px = np.zeros((11, 11, 3), dtype=np.uint8)
        px[5, 5] = 255
        res = srm_residual(RgbImage(px), default_kernel_set())
        for k in range(3):
            assert res[5, 5, k] == -1.0

    def test_clamp_hits_exactly_two(self):
        # pixels at the positive taps of the second kernel, except three
        # of its +2 taps, drive the raw center response to exactly 3.5
        matrix, norm = DEFAULT_KERNELS[1]
        m = np.asarray(matrix)
        gray = np.where(m > 0, 255, 0).astype(np.uint8)
        twos = np.argwhere(m == 2)
        for r, c in twos[:3]:
            gray[r, c] = 0
        raw = 3 * float((m * gray.astype(np.int64)).sum()) / (3.0 * 255.0 * norm)
        assert raw == 3.5
        px = np.repeat(gray[:, :, None], 3, axis=2)
        res = srm_residual(RgbImage(px), default_kernel_set())
        assert res[2, 2, 1] == 2.0

    def test_clamp_never_exceeded(self):
        ks = default_kernel_set()
        for seed in range(100):
            res = srm_residual(random_image(seed, 16, 16), ks)
            assert np.all(np.abs(res) <= 2.0)

    def test_matches_scipy_oracle_bitwise(self):
        # both sides accumulate exact integers in float64, so the results
        # agree bitwise, not just within tolerance
        ks = default_kernel_set()
        for seed in (0, 1, 2, 3, 4):
            img = random_image(seed)
            assert np.array_equal(srm_residual(img, ks), scipy_residual(img.pixels, ks))

    def test_scale_linearity_exact(self):
        # doubling pixel values doubles every unclamped response exactly
        rng = np.random.default_rng(7)
        px = rng.integers(0, 32, size=(20, 20, 3), dtype=np.uint8)
        ks = default_kernel_set()
        r1 = srm_residual(RgbImage(px), ks)
        r2 = srm_residual(RgbImage(2 * px), ks)
        assert np.all(np.abs(r2) < 2.0)
        assert np.array_equal(r2, 2.0 * r1)

    def test_translation_equivariance_in_interior(self):
        rng = np.random.default_rng(3)
        content = rng.integers(0, 256, size=(14, 14, 3), dtype=np.uint8)
        ks = default_kernel_set()

        def place(r0, c0):
            canvas = np.full((40, 40, 3), 128, dtype=np.uint8)
            canvas[r0 : r0 + 14, c0 : c0 + 14] = content
            res = srm_residual(RgbImage(canvas), ks)
            # windows fully inside the placed content
            return res[r0 + 2 : r0 + 12, c0 + 2 : c0 + 12]

        assert np.array_equal(place(5, 6), place(13, 9))

    def test_deterministic(self):
        img = random_image(11)
        ks = default_kernel_set()
        assert np.array_equal(srm_residual(img, ks), srm_residual(img, ks))

    def test_custom_clamp_applied(self):
        img = random_image(2)
        res = srm_residual(img, default_kernel_set(clamp_t=0.05))
        assert np.all(np.abs(res) <= 0.05)
        assert np.any(np.abs(res) == 0.05)

    def test_requires_three_kernels(self):
        img = random_image(0)
        ks = SrmKernelSet((DEFAULT_KERNELS[0],))
        with pytest.raises(ArgumentError):
            srm_residual(img, ks)

    def test_rejects_tiny_image(self):
        px = np.zeros((4, 4, 3), dtype=np.uint8)
        with pytest.raises(ArgumentError):
            srm_residual(RgbImage(px), default_kernel_set())
