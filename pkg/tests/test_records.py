import numpy as np
import pytest

from capfeed.records import BBox, CaptionRecord, ImageRecord, tokenize


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("A Dog, runs!") == ["a", "dog", "runs"]

    def test_apostrophes_survive(self):
        assert tokenize("the dog's ball") == ["the", "dog's", "ball"]

    def test_truncation_at_cap(self):
        assert len(tokenize("word " * 80)) == 50

    def test_empty(self):
        assert tokenize("") == []


class TestBBox:
    def test_rejects_negative_corner(self):
        with pytest.raises(ValueError):
            BBox(-1, 0, 10, 10)

    def test_rejects_zero_extent(self):
        with pytest.raises(ValueError):
            BBox(0, 0, 0, 10)

    def test_iou_disjoint(self):
        assert BBox(0, 0, 10, 10).iou(BBox(20, 20, 10, 10)) == 0.0

    def test_iou_identical(self):
        b = BBox(5, 5, 10, 10)
        assert b.iou(b) == pytest.approx(1.0)


class TestImageRecord:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ImageRecord("x", np.zeros((4, 4, 3), np.uint8), width_px=5, height_px=4)

    def test_bbox_out_of_bounds(self):
        with pytest.raises(ValueError):
            ImageRecord(
                "x", np.zeros((10, 10, 3), np.uint8), 10, 10,
                bboxes=[BBox(5, 5, 6, 2)],
            )


class TestCaptionRecord:
    def test_from_text_tokenizes(self):
        c = CaptionRecord.from_text("c1", "i1", "A red Square.")
        assert c.tokens == ("a", "red", "square")

    def test_augmented_requires_parent_and_method(self):
        with pytest.raises(ValueError):
            CaptionRecord.from_text("c1", "i1", "x", provenance="augmented")

    def test_roundtrip_dict(self):
        c = CaptionRecord.from_text("c1", "i1", "a dog", provenance="corrected")
        assert CaptionRecord.from_dict(c.to_dict()) == c
