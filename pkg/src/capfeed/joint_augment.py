"""Joint image+caption augmentation: paste a labeled object patch from one
image into another and extend the destination caption to mention it."""
from __future__ import annotations

import random

import cv2
import numpy as np

from .records import BBox, CaptionRecord, ImageRecord

DEFAULT_TEMPLATE = "there is a {label} ."
MAX_PATCH_AREA_FRACTION = 0.25  # oversized patches are downscaled to this share of dst
OVERLAP_IOU_LIMIT = 0.3
PLACEMENT_RETRIES = 20


class PlacementError(RuntimeError):
    """No paste location found that respects the overlap limit."""


def _extract_patch(src: ImageRecord, box: BBox) -> np.ndarray:
    pixels = np.asarray(src.pixel_data)
    x0, y0 = int(round(box.x)), int(round(box.y))
    x1, y1 = int(round(box.x + box.w)), int(round(box.y + box.h))
    return pixels[y0:y1, x0:x1].copy()


def cutmix_joint(
    src: ImageRecord,
    src_box: BBox,
    dst: ImageRecord,
    dst_caption: CaptionRecord,
    placement_seed: int = 0,
    template: str = DEFAULT_TEMPLATE,
) -> tuple[ImageRecord, CaptionRecord]:
    """Paste the src_box patch into dst and append a sentence naming its label.

    The paste location is sampled uniformly; candidates overlapping any
    existing dst box by IoU > 0.3 are rejected, with up to 20 retries before
    a PlacementError.
    """
    if not src_box.label:
        raise ValueError("src_box must carry a label")
    patch = _extract_patch(src, src_box)
    ph, pw = patch.shape[0], patch.shape[1]
    if ph < 1 or pw < 1:
        raise ValueError("src_box selects an empty patch")

    # Downscale oversized patches, preserving aspect ratio.
    max_area = MAX_PATCH_AREA_FRACTION * dst.width_px * dst.height_px
    if pw * ph > max_area or pw > dst.width_px or ph > dst.height_px:
        scale = min(
            (max_area / (pw * ph)) ** 0.5,
            dst.width_px / pw,
            dst.height_px / ph,
        )
        pw = max(2, int(pw * scale))
        ph = max(2, int(ph * scale))
        patch = cv2.resize(patch, (pw, ph), interpolation=cv2.INTER_AREA)

    rng = random.Random(placement_seed)
    placed: BBox | None = None
    for _ in range(PLACEMENT_RETRIES):
        x = rng.uniform(0, dst.width_px - pw)
        y = rng.uniform(0, dst.height_px - ph)
        candidate = BBox(x, y, float(pw), float(ph), label=src_box.label)
        if all(candidate.iou(b) <= OVERLAP_IOU_LIMIT for b in dst.bboxes):
            placed = candidate
            break
    if placed is None:
        raise PlacementError(
            f"no placement for {pw}x{ph} patch after {PLACEMENT_RETRIES} tries"
        )

    out_pixels = np.asarray(dst.pixel_data).copy()
    x0, y0 = int(round(placed.x)), int(round(placed.y))
    out_pixels[y0:y0 + ph, x0:x0 + pw] = patch
    out_image = ImageRecord(
        image_id=f"{dst.image_id}-cutmix",
        pixel_data=out_pixels,
        width_px=dst.width_px,
        height_px=dst.height_px,
        bboxes=list(dst.bboxes) + [BBox(float(x0), float(y0), float(pw), float(ph), label=src_box.label)],
        split_tag=dst.split_tag,
    )
    extension = template.format(label=src_box.label)
    base = dst_caption.text.rstrip()
    if not base.endswith("."):
        base = f"{base} ."
    out_caption = dst_caption.with_text(
        f"{base} {extension}",
        caption_id=f"{dst_caption.caption_id}-cutmix",
        image_id=out_image.image_id,
        provenance="augmented",
        method_tag="cutmix",
        parent_id=dst_caption.caption_id,
    )
    return out_image, out_caption
