import numpy as np
import pytest

from capfeed.joint_augment import PlacementError, cutmix_joint
from capfeed.records import BBox, CaptionRecord, ImageRecord


def image(w, h, boxes=(), fill=0, image_id="img"):
    return ImageRecord(
        image_id=image_id,
        pixel_data=np.full((h, w, 3), fill, dtype=np.uint8),
        width_px=w,
        height_px=h,
        bboxes=list(boxes),
    )


def caption(text="a wooden table"):
    return CaptionRecord.from_text("cap0", "img", text)


SRC = image(40, 40, [BBox(5, 5, 20, 20, label="cup")], fill=200, image_id="src")
SRC_BOX = SRC.bboxes[0]


class TestCutmixJoint:
    def test_paste_into_empty_image_bookkeeping(self):
        dst = image(100, 100)
        out_img, out_cap = cutmix_joint(SRC, SRC_BOX, dst, caption(), placement_seed=1)
        assert len(out_img.bboxes) == 1
        b = out_img.bboxes[0]
        assert (b.w, b.h, b.label) == (20.0, 20.0, "cup")

    def test_caption_template_instantiation(self):
        dst = image(100, 100)
        _, out_cap = cutmix_joint(SRC, SRC_BOX, dst, caption("a wooden table"), placement_seed=1)
        assert out_cap.text == "a wooden table . there is a cup ."
        assert out_cap.provenance == "augmented"
        assert out_cap.method_tag == "cutmix"

    def test_caption_token_growth(self):
        dst = image(100, 100)
        base = caption("a wooden table")
        _, out_cap = cutmix_joint(SRC, SRC_BOX, dst, base, placement_seed=1)
        # template "there is a {label} ." adds 4 tokens for a 1-token label
        assert len(out_cap.tokens) == len(base.tokens) + 4

    def test_pixel_conservation_outside_patch(self):
        dst = image(100, 100, fill=17)
        out_img, _ = cutmix_joint(SRC, SRC_BOX, dst, caption(), placement_seed=2)
        b = out_img.bboxes[-1]
        mask = np.ones((100, 100), dtype=bool)
        mask[int(b.y):int(b.y + b.h), int(b.x):int(b.x + b.w)] = False
        np.testing.assert_array_equal(
            np.asarray(out_img.pixel_data)[mask], np.asarray(dst.pixel_data)[mask]
        )

    def test_box_count_increment(self):
        dst = image(200, 200, [BBox(0, 0, 30, 30, label="x")])
        out_img, _ = cutmix_joint(SRC, SRC_BOX, dst, caption(), placement_seed=3)
        assert len(out_img.bboxes) == len(dst.bboxes) + 1

    def test_saturated_destination_fails(self):
        # 20x20 patch into a 40x40 image tiled with 20x20 boxes on a 10px
        # grid: every candidate placement sits within 5px of some box, which
        # puts the pairwise IoU above the 0.3 limit for all 20 retries
        tiles = [BBox(x, y, 20, 20, label="wall") for x in (0, 10, 20) for y in (0, 10, 20)]
        dst = image(40, 40, tiles)
        with pytest.raises(PlacementError):
            cutmix_joint(SRC, SRC_BOX, dst, caption(), placement_seed=4)

    def test_missing_label_rejected(self):
        unlabeled = BBox(5, 5, 20, 20)
        with pytest.raises(ValueError):
            cutmix_joint(SRC, unlabeled, image(100, 100), caption())

    def test_oversized_patch_downscaled(self):
        big_src = image(200, 200, [BBox(0, 0, 190, 190, label="rug")], fill=90)
        dst = image(50, 50)
        out_img, _ = cutmix_joint(big_src, big_src.bboxes[0], dst, caption(), placement_seed=5)
        b = out_img.bboxes[0]
        assert b.w * b.h <= 0.25 * 50 * 50 + 1e-6
