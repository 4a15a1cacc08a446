import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from docicl.dataset import BoxRect
from docicl.errors import DimensionMismatch, EmptyBoxList, InvalidTarget
from docicl.layout import (
    BinaryLayoutImage,
    GrayLayoutImage,
    crop_with_margin,
    information_area,
    layout_similarity,
    render_layout,
    resize_layout,
    write_pgm,
)


def brute_force_union_area(boxes, page):
    """Independent per-pixel membership test (the render oracle)."""
    w, h = page
    count = 0
    for y in range(h):
        for x in range(w):
            if any(b.x1 <= x < b.x2 and b.y1 <= y < b.y2 for b in boxes):
                count += 1
    return count


def naive_mse(a, b):
    """Per-pixel double loop, no numpy."""
    total = 0.0
    h, w = a.shape
    for y in range(h):
        for x in range(w):
            d = float(a[y, x]) - float(b[y, x])
            total += d * d
    return total / (w * h)


def random_boxes(rng, page, n):
    out = []
    for _ in range(n):
        x1 = rng.randrange(0, page[0])
        y1 = rng.randrange(0, page[1])
        x2 = rng.randrange(x1, page[0] + 1)
        y2 = rng.randrange(y1, page[1] + 1)
        out.append(BoxRect(x1, y1, x2, y2))
    return out


class TestRender:
    def test_single_box_ink_count(self):
        img = render_layout([BoxRect(0, 0, 2, 2)], (4, 4))
        assert img.ink_count() == 4
        assert img.width == 4 and img.height == 4

    def test_overlap_not_double_counted(self):
        boxes = [BoxRect(0, 0, 3, 3), BoxRect(1, 1, 4, 4)]
        img = render_layout(boxes, (5, 5))
        assert img.ink_count() == brute_force_union_area(boxes, (5, 5))

    def test_permutation_invariant(self):
        rng = random.Random(0)
        boxes = random_boxes(rng, (16, 16), 5)
        a = render_layout(boxes, (16, 16))
        b = render_layout(list(reversed(boxes)), (16, 16))
        assert np.array_equal(a.pixels, b.pixels)

    def test_empty_box_list(self):
        with pytest.raises(EmptyBoxList):
            render_layout([], (4, 4))

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_union_area_property(self, seed):
        rng = random.Random(seed)
        page = (rng.randrange(4, 33), rng.randrange(4, 33))
        boxes = random_boxes(rng, page, rng.randrange(1, 6))
        img = render_layout(boxes, page)
        assert img.ink_count() == brute_force_union_area(boxes, page)


class TestInformationArea:
    def test_two_boxes(self):
        area = information_area([BoxRect(20, 30, 50, 60), BoxRect(10, 40, 80, 70)])
        assert area.as_list() == [10, 30, 80, 70]

    def test_single_box_identity(self):
        box = BoxRect(3, 4, 5, 6)
        assert information_area([box]) == box

    def test_nested(self):
        outer = BoxRect(0, 0, 100, 100)
        assert information_area([BoxRect(10, 10, 20, 20), outer]) == outer


class TestCropWithMargin:
    def test_spec_example(self):
        cropped, canvas = crop_with_margin(
            [BoxRect(20, 30, 50, 60), BoxRect(10, 40, 80, 70)], margin=10
        )
        assert [b.as_list() for b in cropped] == [[20, 10, 50, 40], [10, 20, 80, 50]]
        assert canvas == (90, 60)

    def test_zero_margin(self):
        cropped, canvas = crop_with_margin([BoxRect(0, 0, 5, 5)], margin=0)
        assert cropped[0].as_list() == [0, 0, 5, 5]
        assert canvas == (5, 5)

    def test_origin_clamps_at_zero(self):
        cropped, canvas = crop_with_margin([BoxRect(3, 2, 10, 6)], margin=10)
        # origin clamps to (0, 0); the left margin stays 3, the top 2
        assert cropped[0].as_list() == [3, 2, 10, 6]
        assert canvas == (20, 16)

    def test_margin_restored_when_not_clamped(self):
        boxes = [BoxRect(40, 50, 90, 80), BoxRect(60, 30, 70, 90)]
        cropped, _ = crop_with_margin(boxes, margin=10)
        area = information_area(cropped)
        assert (area.x1, area.y1) == (10, 10)


class TestResize:
    def test_all_zero_stays_zero(self):
        img = BinaryLayoutImage(np.zeros((8, 8), dtype=np.uint8), boxes=(BoxRect(0, 0, 0, 0),))
        for method in ("lanczos_binarize", "bilinear", "lanczos", "area", "coord_rescale"):
            out = resize_layout(img, (5, 5), method)
            assert float(np.sum(out.pixels)) == 0.0

    def test_all_one_binarize(self):
        img = BinaryLayoutImage(np.ones((6, 6), dtype=np.uint8))
        out = resize_layout(img, (9, 9), "lanczos_binarize")
        assert isinstance(out, BinaryLayoutImage)
        assert out.ink_count() == 81

    def test_binarize_strictly_binary(self):
        rng = random.Random(4)
        boxes = random_boxes(rng, (32, 32), 4)
        img = render_layout(boxes, (32, 32))
        out = resize_layout(img, (16, 16), "lanczos_binarize")
        assert set(np.unique(out.pixels)) <= {0, 1}

    def test_gray_methods_in_unit_range(self):
        img = render_layout([BoxRect(0, 0, 5, 5)], (10, 10))
        for method in ("bilinear", "lanczos", "area"):
            out = resize_layout(img, (7, 7), method)
            assert isinstance(out, GrayLayoutImage)
            assert 0.0 <= out.pixels.min() and out.pixels.max() <= 1.0

    def test_coord_rescale_matches_rerasterization(self):
        # Checkerboard of 2x2 boxes on a 16x16 page, downscaled 2x.
        boxes = [
            BoxRect(x, y, x + 2, y + 2)
            for y in range(0, 16, 4)
            for x in range(0, 16, 4)
        ]
        img = render_layout(boxes, (16, 16))
        out = resize_layout(img, (8, 8), "coord_rescale")
        # independent oracle: scale box corners by hand (round half-up), rasterize
        expected = np.zeros((8, 8), dtype=np.uint8)
        for b in boxes:
            x1 = int(np.floor(b.x1 * 0.5 + 0.5))
            y1 = int(np.floor(b.y1 * 0.5 + 0.5))
            x2 = int(np.floor(b.x2 * 0.5 + 0.5))
            y2 = int(np.floor(b.y2 * 0.5 + 0.5))
            expected[y1:y2, x1:x2] = 1
        assert np.array_equal(out.pixels, expected)

    def test_invalid_target(self):
        img = render_layout([BoxRect(0, 0, 2, 2)], (4, 4))
        with pytest.raises(InvalidTarget):
            resize_layout(img, (0, 5))


class TestSimilarity:
    def test_identity_is_zero_and_ranks_first(self):
        img = render_layout([BoxRect(0, 0, 2, 2)], (4, 4))
        other = render_layout([BoxRect(1, 1, 3, 3)], (4, 4))
        same = layout_similarity(img, img, "mse")
        diff = layout_similarity(img, other, "mse")
        assert same.value == 0.0
        assert same.comparable > diff.comparable

    def test_four_pixel_difference(self):
        a = np.zeros((4, 4), dtype=np.uint8)
        b = a.copy()
        b[0, :4] = 1
        score = layout_similarity(BinaryLayoutImage(a), BinaryLayoutImage(b), "mse")
        assert score.value == pytest.approx(0.25, abs=0)
        # inverse-mse form of the same comparison: n_l / ((U-V)^T (U-V))
        ssd = float(((a.astype(float) - b.astype(float)) ** 2).sum())
        assert a.size / ssd == pytest.approx(4.0, abs=0)

    def test_dimension_mismatch(self):
        a = BinaryLayoutImage(np.zeros((4, 4), dtype=np.uint8))
        b = BinaryLayoutImage(np.zeros((4, 5), dtype=np.uint8))
        with pytest.raises(DimensionMismatch):
            layout_similarity(a, b)

    def test_mse_matches_naive_loop(self):
        rng = random.Random(9)
        for _ in range(10):
            page = (12, 12)
            a = render_layout(random_boxes(rng, page, 3), page)
            b = render_layout(random_boxes(rng, page, 3), page)
            expected = naive_mse(a.pixels, b.pixels)
            assert layout_similarity(a, b, "mse").value == pytest.approx(expected, abs=1e-12)

    def test_mse_symmetric_nonnegative(self):
        rng = random.Random(10)
        page = (16, 16)
        a = render_layout(random_boxes(rng, page, 4), page)
        b = render_layout(random_boxes(rng, page, 4), page)
        ab = layout_similarity(a, b, "mse").value
        ba = layout_similarity(b, a, "mse").value
        assert ab == ba >= 0.0

    def test_cosine_flattened(self):
        a = BinaryLayoutImage(np.eye(4, dtype=np.uint8))
        b = BinaryLayoutImage(np.eye(4, dtype=np.uint8))
        assert layout_similarity(a, b, "cosine").value == pytest.approx(1.0)

    def test_ssim_identity_and_range(self):
        rng = random.Random(11)
        page = (24, 24)
        a = render_layout(random_boxes(rng, page, 5), page)
        b = render_layout(random_boxes(rng, page, 5), page)
        assert layout_similarity(a, a, "ssim").value == pytest.approx(1.0)
        val = layout_similarity(a, b, "ssim").value
        assert -1.0 <= val <= 1.0
        assert val == layout_similarity(b, a, "ssim").value


class TestPgmExport:
    def test_round_trip_header_and_pixels(self, tmp_path):
        img = render_layout([BoxRect(0, 0, 2, 1)], (3, 2))
        path = tmp_path / "doc-1.layout.pgm"
        write_pgm(img, path)
        blob = path.read_bytes()
        header, pixels = blob.split(b"255\n", 1)
        assert header == b"P5\n3 2\n"
        # ink is black (0), background white (255)
        assert list(pixels) == [0, 0, 255, 255, 255, 255]
