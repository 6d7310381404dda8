"""Synthetic colored-shapes dataset used by fixtures, the overfit oracle, and
the two-task forgetting benchmark."""
from __future__ import annotations

import random

import cv2
import numpy as np

from .records import BBox, CaptionRecord, ImageRecord

SHAPES = ("circle", "square", "triangle", "star")
COLORS = {
    "red": (220, 40, 40),
    "green": (40, 200, 40),
    "blue": (40, 40, 220),
    "yellow": (230, 220, 40),
}
BACKGROUNDS = {
    "white": (245, 245, 245),
    "black": (15, 15, 15),
    "gray": (128, 128, 128),
}

CAPTION_TEMPLATE = "a {color} {shape} on a {background} background"


def _star_points(cx, cy, r_outer, r_inner, n=5):
    pts = []
    for i in range(2 * n):
        r = r_outer if i % 2 == 0 else r_inner
        ang = -np.pi / 2 + i * np.pi / n
        pts.append([cx + r * np.cos(ang), cy + r * np.sin(ang)])
    return np.array(pts, dtype=np.int32)


def make_shape_image(
    shape: str,
    color: str,
    background: str = "white",
    image_id: str | None = None,
    size: int = 64,
    seed: int = 0,
) -> ImageRecord:
    if shape not in SHAPES:
        raise ValueError(f"unknown shape {shape!r}")
    rng = random.Random(seed)
    img = np.full((size, size, 3), BACKGROUNDS[background], dtype=np.uint8)
    rgb = COLORS[color]
    r = rng.randint(size // 6, size // 4)
    cx = rng.randint(r + 2, size - r - 2)
    cy = rng.randint(r + 2, size - r - 2)
    if shape == "circle":
        cv2.circle(img, (cx, cy), r, rgb, thickness=-1)
    elif shape == "square":
        cv2.rectangle(img, (cx - r, cy - r), (cx + r, cy + r), rgb, thickness=-1)
    elif shape == "triangle":
        pts = np.array([[cx, cy - r], [cx - r, cy + r], [cx + r, cy + r]], dtype=np.int32)
        cv2.fillPoly(img, [pts], rgb)
    else:  # star
        cv2.fillPoly(img, [_star_points(cx, cy, r, r // 2)], rgb)
    box = BBox(float(cx - r), float(cy - r), float(2 * r), float(2 * r), label=shape)
    return ImageRecord(
        image_id=image_id or f"{color}-{shape}-{seed}",
        pixel_data=img,
        width_px=size,
        height_px=size,
        bboxes=[box],
    )


def make_shapes_dataset(
    pairs: list[tuple[str, str]],
    size: int = 64,
    seed: int = 0,
    background_cycle: tuple[str, ...] = ("white", "black", "gray"),
) -> tuple[list[ImageRecord], list[CaptionRecord]]:
    """One image + one templated caption per (shape, color) pair."""
    images, captions = [], []
    for i, (shape, color) in enumerate(pairs):
        background = background_cycle[i % len(background_cycle)]
        image_id = f"shape-{i:03d}"
        images.append(
            make_shape_image(shape, color, background, image_id=image_id, size=size, seed=seed + i)
        )
        captions.append(
            CaptionRecord.from_text(
                caption_id=f"shape-cap-{i:03d}",
                image_id=image_id,
                text=CAPTION_TEMPLATE.format(color=color, shape=shape, background=background),
            )
        )
    return images, captions


def eight_pair_fixture(size: int = 64, seed: int = 0):
    """4 shapes x 2 colors; the overfit-oracle fixture."""
    pairs = [(s, c) for s in SHAPES for c in ("red", "blue")]
    return make_shapes_dataset(pairs, size=size, seed=seed)


def two_task_fixture(n_per_task: int = 8, size: int = 64, seed: int = 0):
    """Task A: circles/squares, task B: triangles/stars.

    Returns ((images_a, captions_a), (images_b, captions_b)).
    """
    rng = random.Random(seed)
    colors = list(COLORS)

    def build(shapes, offset):
        pairs = [(shapes[i % 2], colors[rng.randrange(len(colors))]) for i in range(n_per_task)]
        images, captions = make_shapes_dataset(pairs, size=size, seed=seed + offset)
        for img, cap in zip(images, captions):
            img.image_id = f"t{offset}-{img.image_id}"
            object.__setattr__(cap, "image_id", img.image_id)
            object.__setattr__(cap, "caption_id", f"t{offset}-{cap.caption_id}")
        return images, captions

    return build(("circle", "square"), 0), build(("triangle", "star"), 1000)
