import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionforge.errors import EmptyMaskError
from lesionforge.imaging import (
    HuWindow,
    Slice,
    compute_histogram,
    extract_lesion_sample,
    histogram_l1,
    normalize_hu,
)


def make_slice(pixels, provenance="real"):
    return Slice(pixels=np.asarray(pixels, dtype=np.float32), provenance=provenance)


class TestNormalizeHu:
    WINDOW = HuWindow(-100.0, 400.0)

    @pytest.mark.parametrize(
        "hu,expected",
        [(-100.0, 0.0), (400.0, 1.0), (150.0, 0.5), (-500.0, 0.0), (900.0, 1.0)],
    )
    def test_pointwise(self, hu, expected):
        out = normalize_hu(make_slice([[hu]]), self.WINDOW)
        assert out[0, 0] == pytest.approx(expected, abs=1e-7)

    def test_degenerate_window_rejected(self):
        with pytest.raises(ValueError):
            HuWindow(10.0, 10.0)
        with pytest.raises(ValueError):
            HuWindow(10.0, -10.0)

    def test_monotone_and_idempotent(self):
        rng = np.random.default_rng(0)
        hu = np.sort(rng.uniform(-1200, 1200, size=256)).reshape(16, 16)
        out = normalize_hu(make_slice(hu), self.WINDOW)
        assert np.all(np.diff(out.ravel()) >= 0)
        # re-windowing the already-clipped output through (0, 1) is the identity
        again = normalize_hu(make_slice(out), HuWindow(0.0, 1.0))
        np.testing.assert_allclose(again, out, atol=1e-7)


class TestComputeHistogram:
    def test_uniform_value_is_delta(self):
        patch = np.full((4, 4), 0.505, dtype=np.float32)
        mask = np.ones((4, 4), dtype=np.uint8)
        h = compute_histogram(patch, mask)
        assert h[50] == pytest.approx(1.0)
        assert h.sum() == pytest.approx(1.0)
        assert np.count_nonzero(h) == 1

    def test_two_bin_split(self):
        patch = np.array([[0.005, 0.005], [0.995, 0.995]], dtype=np.float32)
        mask = np.ones((2, 2), dtype=np.uint8)
        h = compute_histogram(patch, mask)
        assert h[0] == pytest.approx(0.5)
        assert h[99] == pytest.approx(0.5)

    def test_value_one_falls_in_last_bin(self):
        h = compute_histogram(np.array([[1.0]]), np.array([[1]], dtype=np.uint8))
        assert h[99] == pytest.approx(1.0)

    def test_empty_mask_rejected(self):
        with pytest.raises(EmptyMaskError):
            compute_histogram(np.zeros((3, 3)), np.zeros((3, 3), dtype=np.uint8))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compute_histogram(np.zeros((3, 3)), np.ones((2, 2), dtype=np.uint8))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_mass_normalized_and_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        patch = rng.random((8, 8)).astype(np.float32)
        mask = (rng.random((8, 8)) < 0.6).astype(np.uint8)
        mask[0, 0] = 1  # keep non-empty
        h = compute_histogram(patch, mask)
        assert abs(h.sum() - 1.0) <= 1e-6
        assert np.all(h >= 0)


class TestHistogramL1:
    def delta(self, b):
        h = np.zeros(100)
        h[b] = 1.0
        return h

    def test_identity(self):
        h = self.delta(10)
        assert histogram_l1(h, h) == 0.0

    def test_disjoint_deltas(self):
        assert histogram_l1(self.delta(0), self.delta(99)) == pytest.approx(2.0)

    def test_delta_vs_split(self):
        split = np.zeros(100)
        split[10] = split[11] = 0.5
        # |1-0.5| + |0-0.5| = 1, independently summed
        assert histogram_l1(self.delta(10), split) == pytest.approx(1.0)

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError):
            histogram_l1(self.delta(0), np.zeros(100))
        with pytest.raises(ValueError):
            histogram_l1(self.delta(0)[:99], self.delta(0)[:99])


class TestExtractLesionSample:
    def test_single_pixel_centering(self):
        pixels = np.zeros((512, 512), dtype=np.float32)
        mask = np.zeros((512, 512), dtype=np.uint8)
        r, c = 300, 211
        pixels[r, c] = 200.0
        mask[r, c] = 1
        sample = extract_lesion_sample(make_slice(pixels), mask, patch_size=128)
        assert sample.mask[64, 64] == 1
        assert sample.mask.sum() == 1
        assert not sample.rescaled

    def test_foreground_count_preserved(self):
        rng = np.random.default_rng(3)
        pixels = rng.uniform(-100, 400, size=(512, 512)).astype(np.float32)
        mask = np.zeros((512, 512), dtype=np.uint8)
        mask[250:255, 100:105] = 1  # 5x5 square
        sample = extract_lesion_sample(make_slice(pixels), mask, patch_size=128)
        assert sample.mask.sum() == 25
        assert not sample.rescaled

    def test_oversized_lesion_rescaled(self):
        pixels = np.zeros((256, 256), dtype=np.float32)
        mask = np.ones((256, 256), dtype=np.uint8)
        sample = extract_lesion_sample(make_slice(pixels), mask, patch_size=64)
        assert sample.rescaled
        rows = np.flatnonzero(sample.mask.any(axis=1))
        cols = np.flatnonzero(sample.mask.any(axis=0))
        assert rows[-1] - rows[0] + 1 <= 64
        assert cols[-1] - cols[0] + 1 <= 64

    def test_empty_mask_rejected(self):
        with pytest.raises(EmptyMaskError):
            extract_lesion_sample(make_slice(np.zeros((64, 64))), np.zeros((64, 64), dtype=np.uint8), 32)

    def test_histogram_commutes_with_extraction(self):
        # decompose-then-histogram equals histogram-on-original when no rescale
        rng = np.random.default_rng(11)
        pixels = rng.uniform(-100, 400, size=(256, 256)).astype(np.float32)
        mask = np.zeros((256, 256), dtype=np.uint8)
        rr, cc = np.mgrid[:256, :256]
        mask[(rr - 90) ** 2 + (cc - 140) ** 2 < 15**2] = 1
        slc = make_slice(pixels)
        window = HuWindow(-100.0, 400.0)
        sample = extract_lesion_sample(slc, mask, patch_size=64, window=window)
        assert not sample.rescaled
        h_patch = compute_histogram(sample.patch, sample.mask)
        h_orig = compute_histogram(normalize_hu(slc, window), mask)
        np.testing.assert_array_equal(h_patch, h_orig)
