import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from noisepair.maskops import (
    BBox,
    BinaryMask,
    boundary_region,
    clean_reference_mask,
    load_mask,
    morph,
    resample_to_latent,
    save_mask,
    size_filter,
    to_bbox_mask,
)


# ---------------------------------------------------------------------------
# enumeration oracles


def brute_morph(bits: np.ndarray, mode: str, r: int) -> np.ndarray:
    """Pixel-by-pixel reference morphology with border clipping."""
    h, w = bits.shape
    out = np.zeros_like(bits)
    for i in range(h):
        for j in range(w):
            window = bits[max(0, i - r) : i + r + 1, max(0, j - r) : j + r + 1]
            out[i, j] = window.all() if mode == "erode" else window.any()
    return out


def brute_boundary_region(bits: np.ndarray, dilate_radius: int, rect_margin: int) -> np.ndarray:
    dilated = brute_morph(bits, "dilate", dilate_radius)
    rows = np.flatnonzero(dilated.any(axis=1))
    cols = np.flatnonzero(dilated.any(axis=0))
    h, w = bits.shape
    rect = np.zeros_like(bits)
    rect[
        max(rows[0] - rect_margin, 0) : min(rows[-1] + rect_margin, h - 1) + 1,
        max(cols[0] - rect_margin, 0) : min(cols[-1] + rect_margin, w - 1) + 1,
    ] = True
    return rect & ~dilated


def block_mask(h, w, r0, r1, c0, c1):
    bits = np.zeros((h, w), dtype=bool)
    bits[r0 : r1 + 1, c0 : c1 + 1] = True
    return BinaryMask(bits)


def rand_mask(seed, h=16, w=16, p=0.3):
    return BinaryMask(np.random.default_rng(seed).random((h, w)) < p)


# ---------------------------------------------------------------------------
# morphology


class TestMorph:
    def test_radius_zero_is_identity(self):
        mask = rand_mask(0)
        assert np.array_equal(morph(mask, "erode", 0).bits, mask.bits)
        assert np.array_equal(morph(mask, "dilate", 0).bits, mask.bits)

    def test_erode_square_block(self):
        mask = block_mask(8, 8, 2, 5, 2, 5)  # 4x4 solid block
        eroded = morph(mask, "erode", 1)
        assert np.array_equal(eroded.bits, block_mask(8, 8, 3, 4, 3, 4).bits)

    @pytest.mark.parametrize("mode", ["erode", "dilate"])
    @pytest.mark.parametrize("radius", [1, 2])
    def test_against_enumeration_oracle(self, mode, radius):
        for seed in range(8):
            mask = rand_mask(seed)
            got = morph(mask, mode, radius).bits
            want = brute_morph(mask.bits, mode, radius)
            assert np.array_equal(got, want), f"seed {seed}"

    def test_border_clipping_keeps_full_frame(self):
        full = BinaryMask.full(6, 6)
        assert np.array_equal(morph(full, "erode", 2).bits, full.bits)

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            morph(rand_mask(0), "erode", -1)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            morph(rand_mask(0), "open", 1)

    @settings(max_examples=30, deadline=None)
    @given(
        bits=hnp.arrays(bool, (12, 12)),
        extra=hnp.arrays(bool, (12, 12)),
        radius=st.integers(0, 3),
        mode=st.sampled_from(["erode", "dilate"]),
    )
    def test_monotone_in_the_mask(self, bits, extra, radius, mode):
        small = BinaryMask(bits)
        large = BinaryMask(bits | extra)
        a = morph(small, mode, radius).bits
        b = morph(large, mode, radius).bits
        assert not (a & ~b).any()  # subset in, subset out


class TestCleanReferenceMask:
    def test_opening_removes_speckles_keeps_blob(self):
        bits = np.zeros((12, 12), dtype=bool)
        bits[3:9, 3:9] = True  # 6x6 blob survives radius 1
        bits[0, 0] = bits[11, 2] = bits[5, 11] = True  # speckles die
        cleaned = clean_reference_mask(BinaryMask(bits), 1)
        want = np.zeros_like(bits)
        want[3:9, 3:9] = True
        assert np.array_equal(cleaned.bits, want)

    def test_isolated_pixels_open_to_empty(self):
        bits = np.zeros((8, 8), dtype=bool)
        bits[1, 1] = bits[4, 6] = bits[6, 3] = True
        cleaned = clean_reference_mask(BinaryMask(bits), 1)
        assert cleaned.is_empty

    def test_radius_zero_identity(self):
        mask = rand_mask(4)
        assert np.array_equal(clean_reference_mask(mask, 0).bits, mask.bits)

    def test_opening_is_anti_extensive(self):
        for seed in range(6):
            mask = rand_mask(seed, p=0.5)
            opened = clean_reference_mask(mask, 1)
            assert not (opened.bits & ~mask.bits).any()

    def test_matches_oracle_composition(self):
        for seed in range(5):
            mask = rand_mask(seed, p=0.45)
            got = clean_reference_mask(mask, 1).bits
            want = brute_morph(brute_morph(mask.bits, "erode", 1), "dilate", 1)
            assert np.array_equal(got, want)


class TestBBoxMask:
    def test_l_shape_fills_to_rectangle(self):
        bits = np.zeros((8, 6), dtype=bool)
        bits[2:6, 1] = True  # vertical stroke rows 2..5, col 1
        bits[5, 1:4] = True  # horizontal stroke cols 1..3
        out = to_bbox_mask(BinaryMask(bits), 0)
        assert np.array_equal(out.bits, block_mask(8, 6, 2, 5, 1, 3).bits)
        assert out.popcount == 4 * 3

    def test_rectangle_is_fixed_point(self):
        rect = block_mask(10, 10, 2, 6, 3, 8)
        assert np.array_equal(to_bbox_mask(rect, 0).bits, rect.bits)

    def test_large_margin_clips_to_frame(self):
        out = to_bbox_mask(block_mask(6, 6, 2, 3, 2, 3), margin=100)
        assert np.array_equal(out.bits, np.ones((6, 6), dtype=bool))

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            to_bbox_mask(BinaryMask.empty(4, 4))

    def test_bbox_of_mask(self):
        box = BBox.of_mask(block_mask(10, 10, 1, 4, 2, 7))
        assert (box.row_min, box.row_max, box.col_min, box.col_max) == (1, 4, 2, 7)
        assert box.height == 4 and box.width == 6


class TestResample:
    def test_full_mask_stays_full(self):
        for th, tw in [(4, 4), (16, 16), (3, 7)]:
            out = resample_to_latent(BinaryMask.full(8, 8), th, tw)
            assert out.popcount == th * tw

    def test_empty_mask_stays_empty(self):
        assert resample_to_latent(BinaryMask.empty(8, 8), 4, 4).is_empty

    def test_half_plane_downsample(self):
        bits = np.zeros((8, 8), dtype=bool)
        bits[:, :4] = True
        out = resample_to_latent(BinaryMask(bits), 4, 4)
        want = np.zeros((4, 4), dtype=bool)
        want[:, :2] = True
        assert np.array_equal(out.bits, want)

    def test_area_average_oracle(self):
        """Each 2x2 block averages >= 0.5 exactly when it has >= 2 set pixels."""
        mask = rand_mask(13, 8, 8, p=0.5)
        out = resample_to_latent(mask, 4, 4)
        blocks = mask.bits.reshape(4, 2, 4, 2).sum(axis=(1, 3))
        assert np.array_equal(out.bits, blocks >= 2)

    def test_upsample_is_nearest(self):
        bits = np.array([[True, False], [False, True]])
        out = resample_to_latent(BinaryMask(bits), 4, 4)
        want = np.repeat(np.repeat(bits, 2, axis=0), 2, axis=1)
        assert np.array_equal(out.bits, want)


class TestSizeFilter:
    # (image_h, image_w, bbox_h, bbox_w, accepted) covering both thresholds
    # in both dimensions, including exact boundaries (strict comparisons)
    CASES = [
        (1000, 800, 800, 300, False),  # height over 3/4
        (1000, 800, 500, 400, True),
        (100, 100, 19, 50, False),     # height under 1/5
        (1000, 800, 751, 400, False),  # just over 3/4 height
        (1000, 800, 750, 400, True),   # exactly 3/4 height passes
        (1000, 800, 200, 400, True),   # exactly 1/5 height passes
        (1000, 800, 199, 400, False),  # just under 1/5 height
        (1000, 800, 500, 601, False),  # just over 3/4 width
        (1000, 800, 500, 600, True),   # exactly 3/4 width passes
        (1000, 800, 500, 160, True),   # exactly 1/5 width passes
        (1000, 800, 500, 159, False),  # just under 1/5 width
        (60, 60, 45, 12, True),        # both axes exactly on their bounds
    ]

    @pytest.mark.parametrize("ih,iw,bh,bw,accepted", CASES)
    def test_threshold_table(self, ih, iw, bh, bw, accepted):
        mask = block_mask(ih, iw, 0, bh - 1, 0, bw - 1)
        decision = size_filter(mask, ih, iw)
        assert decision.accepted == accepted, decision.reason

    def test_empty_mask_distinct_reason(self):
        decision = size_filter(BinaryMask.empty(100, 100), 100, 100)
        assert not decision.accepted
        assert decision.reason == "empty mask"

    def test_deterministic(self):
        mask = block_mask(100, 100, 10, 60, 10, 60)
        first = size_filter(mask, 100, 100)
        for _ in range(5):
            assert size_filter(mask, 100, 100) == first


class TestBoundaryRegion:
    def test_worked_example_dilate_fills_rect(self):
        mask = block_mask(10, 10, 3, 6, 3, 6)  # 4x4 object
        region = boundary_region(mask, dilate_radius=1, rect_margin=0)
        assert region.popcount == 0  # 6x6 dilation fills its own rectangle

    def test_worked_example_margin_band(self):
        mask = block_mask(10, 10, 3, 6, 3, 6)
        region = boundary_region(mask, dilate_radius=0, rect_margin=1)
        assert region.popcount == 36 - 16  # 6x6 rect minus the 4x4 object
        assert np.array_equal(region.bits, brute_boundary_region(mask.bits, 0, 1))

    def test_circular_mask_leaves_corners(self):
        yy, xx = np.mgrid[0:15, 0:15]
        disc = (yy - 7) ** 2 + (xx - 7) ** 2 <= 16
        region = boundary_region(BinaryMask(disc), 1, 0)
        assert np.array_equal(region.bits, brute_boundary_region(disc, 1, 0))
        assert region.popcount > 0

    def test_full_frame_mask_gives_empty_region(self):
        region = boundary_region(BinaryMask.full(8, 8), 1, 0)
        assert region.is_empty

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            boundary_region(BinaryMask.empty(8, 8), 1, 0)

    def test_disjoint_and_contained(self):
        for seed in range(25):
            mask = rand_mask(seed, 20, 20, p=0.1)
            if mask.is_empty:
                continue
            dilated = morph(mask, "dilate", 1)
            rect = to_bbox_mask(dilated, 1)
            region = boundary_region(mask, 1, 1)
            assert not (region.bits & dilated.bits).any()
            assert not (region.bits & ~rect.bits).any()


class TestMaskIO:
    def test_png_roundtrip(self, tmp_path):
        mask = rand_mask(3, 13, 9, p=0.4)
        path = tmp_path / "mask.png"
        save_mask(mask, path)
        assert np.array_equal(load_mask(path).bits, mask.bits)

    def test_nonzero_means_set(self, tmp_path):
        from PIL import Image

        arr = np.array([[0, 1], [128, 255]], dtype=np.uint8)
        path = tmp_path / "gray.png"
        Image.fromarray(arr, mode="L").save(path)
        assert np.array_equal(load_mask(path).bits, arr != 0)
