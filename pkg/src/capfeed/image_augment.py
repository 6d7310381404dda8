"""Bounding-box-aware image augmentation.

Geometric transforms remap boxes through the same coordinate mapping the
pixels use: flips and 90-degree rotations get exact integer formulas, while
arbitrary rotations map box corners through the affine and distortions map 8
sample points per box edge through the forward warp before taking the
axis-aligned hull. Blur is photometric and leaves boxes untouched.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import cv2
import numpy as np

from .records import BBox, ImageRecord

MIN_BOX_AREA = 4.0  # px^2; smaller surviving boxes are dropped

TRANSFORM_KINDS = ("rotate", "hflip", "vflip", "blur", "optical_distort", "grid_distort")


@dataclass(frozen=True)
class Transform:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        p = self.params
        if self.kind == "rotate":
            theta = p.get("theta", 0.0)
            if not -180.0 <= theta <= 180.0:
                raise ValueError("rotation angle must be in [-180, 180]")
        elif self.kind == "blur":
            if p.get("radius", 1.0) < 0:
                raise ValueError("blur radius must be >= 0")
        elif self.kind == "optical_distort":
            if abs(p.get("k", 0.0)) > 0.5:
                raise ValueError("optical distortion coefficient limited to |k| <= 0.5")
        elif self.kind == "grid_distort":
            if p.get("steps", 5) < 2:
                raise ValueError("grid distortion needs >= 2 steps")
            if not 0 <= p.get("magnitude", 0.1) <= 0.5:
                raise ValueError("grid distortion magnitude limited to [0, 0.5]")


def _clip_boxes(boxes, width: int, height: int) -> list[BBox]:
    """Clip raw (x0, y0, x1, y1, label) extents to bounds, dropping slivers."""
    out = []
    for x0, y0, x1, y1, label in boxes:
        x0, y0 = max(0.0, x0), max(0.0, y0)
        x1, y1 = min(float(width), x1), min(float(height), y1)
        if x1 - x0 <= 0 or y1 - y0 <= 0:
            continue
        if (x1 - x0) * (y1 - y0) < MIN_BOX_AREA:
            continue
        out.append(BBox(x0, y0, x1 - x0, y1 - y0, label=label))
    return out


def _hull(xs: np.ndarray, ys: np.ndarray, label):
    return (float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()), label)


def _raw(b: BBox):
    return (b.x, b.y, b.x + b.w, b.y + b.h, b.label)


def _edge_points(b: BBox, per_edge: int = 8) -> tuple[np.ndarray, np.ndarray]:
    ts = np.linspace(0.0, 1.0, per_edge)
    xs = np.concatenate([
        b.x + ts * b.w, b.x + ts * b.w,
        np.full(per_edge, b.x), np.full(per_edge, b.x + b.w),
    ])
    ys = np.concatenate([
        np.full(per_edge, b.y), np.full(per_edge, b.y + b.h),
        b.y + ts * b.h, b.y + ts * b.h,
    ])
    return xs, ys


def _rot90_boxes(boxes: list[BBox], width: int, height: int, k: int) -> list[BBox]:
    """Boxes after k counter-clockwise quarter turns of a width x height image."""
    out = boxes
    w, h = width, height
    for _ in range(k % 4):
        out = [BBox(b.y, w - b.x - b.w, b.h, b.w, label=b.label) for b in out]
        w, h = h, w
    return out


def _rotate_exact(image: ImageRecord, quarter_turns: int) -> tuple[np.ndarray, list[BBox]]:
    pixels = np.rot90(np.asarray(image.pixel_data), k=quarter_turns).copy()
    boxes = [_raw(b) for b in _rot90_boxes(image.bboxes, image.width_px, image.height_px, quarter_turns)]
    return pixels, boxes


def _rotate_arbitrary(image: ImageRecord, theta: float) -> tuple[np.ndarray, list[BBox]]:
    h, w = image.height_px, image.width_px
    rad = math.radians(theta)
    new_w = int(math.ceil(abs(w * math.cos(rad)) + abs(h * math.sin(rad))))
    new_h = int(math.ceil(abs(w * math.sin(rad)) + abs(h * math.cos(rad))))
    m = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), theta, 1.0)
    m[0, 2] += new_w / 2.0 - w / 2.0
    m[1, 2] += new_h / 2.0 - h / 2.0
    pixels = cv2.warpAffine(
        np.asarray(image.pixel_data), m, (new_w, new_h), flags=cv2.INTER_LINEAR
    )
    boxes = []
    for b in image.bboxes:
        corners = np.array([
            [b.x, b.y, 1.0], [b.x + b.w, b.y, 1.0],
            [b.x, b.y + b.h, 1.0], [b.x + b.w, b.y + b.h, 1.0],
        ])
        mapped = corners @ m.T
        boxes.append(_hull(mapped[:, 0], mapped[:, 1], b.label))
    return pixels, boxes


def _optical_maps(width: int, height: int, k: float):
    """Radial distortion. Returns (map_x, map_y) for cv2.remap (dst->src) and a
    forward point-mapping function (src->dst)."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    rmax = math.hypot(cx, cy) or 1.0

    def dst_to_src_radius(r):
        return r * (1.0 + k * (r / rmax) ** 2)

    ys, xs = np.mgrid[0:height, 0:width].astype(np.float32)
    dx, dy = xs - cx, ys - cy
    r = np.hypot(dx, dy)
    scale = np.where(r > 0, dst_to_src_radius(r) / np.maximum(r, 1e-9), 1.0)
    map_x = (cx + dx * scale).astype(np.float32)
    map_y = (cy + dy * scale).astype(np.float32)

    # Forward = inverse of the monotone dst->src radius function.
    # keep the sample range inside the monotone region of the radius map
    r_hi = 2.0 * rmax if k >= 0 else 0.999 * rmax * math.sqrt(-1.0 / (3.0 * k))
    samples = np.linspace(0.0, r_hi, 4096)
    src_of_dst = dst_to_src_radius(samples)

    def forward(xs_pts, ys_pts):
        dxp, dyp = xs_pts - cx, ys_pts - cy
        rp = np.hypot(dxp, dyp)
        r_dst = np.interp(rp, src_of_dst, samples)
        scale_p = np.where(rp > 0, r_dst / np.maximum(rp, 1e-9), 1.0)
        return cx + dxp * scale_p, cy + dyp * scale_p

    return map_x, map_y, forward


def _grid_maps(width: int, height: int, steps: int, magnitude: float, seed: int):
    """Separable grid distortion: each axis gets a monotone piecewise-linear
    stretch with per-cell factors 1 + U(-1,1) * magnitude, renormalized."""
    rng = np.random.default_rng(seed)

    def axis_nodes(extent):
        factors = 1.0 + rng.uniform(-1.0, 1.0, size=steps) * magnitude
        widths = factors / factors.sum() * extent
        dst_nodes = np.concatenate([[0.0], np.cumsum(widths)])
        src_nodes = np.linspace(0.0, extent, steps + 1)
        return src_nodes, dst_nodes

    sx, dx = axis_nodes(float(width))
    sy, dy = axis_nodes(float(height))

    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    map_x = np.tile(np.interp(xs, dx, sx).astype(np.float32), (height, 1))
    map_y = np.tile(np.interp(ys, dy, sy).astype(np.float32)[:, None], (1, width))

    def forward(xs_pts, ys_pts):
        return np.interp(xs_pts, sx, dx), np.interp(ys_pts, sy, dy)

    return map_x, map_y, forward


def _distort(image: ImageRecord, map_x, map_y, forward) -> tuple[np.ndarray, list[BBox]]:
    pixels = cv2.remap(
        np.asarray(image.pixel_data), map_x, map_y,
        interpolation=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101,
    )
    boxes = []
    for b in image.bboxes:
        xs, ys = _edge_points(b)
        fx, fy = forward(xs, ys)
        boxes.append(_hull(np.asarray(fx), np.asarray(fy), b.label))
    return pixels, boxes


def apply_transform(image: ImageRecord, t: Transform, seed: int = 0) -> ImageRecord:
    """Apply one transform, returning a new record with remapped boxes."""
    pixels = np.asarray(image.pixel_data)
    if t.kind == "hflip":
        out = pixels[:, ::-1].copy()
        boxes = [
            (image.width_px - b.x - b.w, b.y, image.width_px - b.x, b.y + b.h, b.label)
            for b in image.bboxes
        ]
    elif t.kind == "vflip":
        out = pixels[::-1].copy()
        boxes = [
            (b.x, image.height_px - b.y - b.h, b.x + b.w, image.height_px - b.y, b.label)
            for b in image.bboxes
        ]
    elif t.kind == "rotate":
        theta = float(t.params.get("theta", 0.0))
        if theta % 90 == 0:
            # np.rot90 path keeps pixels and box formulas discrete-exact
            out, boxes = _rotate_exact(image, int(theta // 90) % 4)
        else:
            out, boxes = _rotate_arbitrary(image, theta)
    elif t.kind == "blur":
        radius = float(t.params.get("radius", 1.0))
        if radius == 0:
            out = pixels.copy()
        else:
            ksize = 2 * int(math.ceil(2 * radius)) + 1
            out = cv2.GaussianBlur(pixels, (ksize, ksize), sigmaX=radius)
        boxes = [_raw(b) for b in image.bboxes]
    elif t.kind == "optical_distort":
        k = float(t.params.get("k", 0.2))
        map_x, map_y, forward = _optical_maps(image.width_px, image.height_px, k)
        out, boxes = _distort(image, map_x, map_y, forward)
    elif t.kind == "grid_distort":
        steps = int(t.params.get("steps", 5))
        magnitude = float(t.params.get("magnitude", 0.1))
        map_x, map_y, forward = _grid_maps(image.width_px, image.height_px, steps, magnitude, seed)
        out, boxes = _distort(image, map_x, map_y, forward)
    else:  # pragma: no cover - guarded by Transform validation
        raise ValueError(t.kind)

    height, width = out.shape[0], out.shape[1]
    return ImageRecord(
        image_id=image.image_id,
        pixel_data=out,
        width_px=width,
        height_px=height,
        bboxes=_clip_boxes(boxes, width, height),
        split_tag=image.split_tag,
    )


def sample_transform(rng: random.Random) -> Transform:
    kind = rng.choice(TRANSFORM_KINDS)
    if kind == "rotate":
        return Transform("rotate", {"theta": rng.uniform(-45.0, 45.0)})
    if kind == "blur":
        return Transform("blur", {"radius": rng.uniform(0.5, 2.5)})
    if kind == "optical_distort":
        return Transform("optical_distort", {"k": rng.uniform(-0.3, 0.3)})
    if kind == "grid_distort":
        return Transform("grid_distort", {"steps": 5, "magnitude": rng.uniform(0.05, 0.2)})
    return Transform(kind)


def augment_image(image: ImageRecord, k: int = 5, seed: int = 0) -> list[ImageRecord]:
    """k augmented copies, each from one randomly sampled transform."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = random.Random(seed)
    out = []
    for i in range(k):
        t = sample_transform(rng)
        sub_seed = rng.randrange(2**31)
        augmented = apply_transform(image, t, seed=sub_seed)
        augmented.image_id = f"{image.image_id}-aug{i}"
        out.append(augmented)
    return out
