"""Core record types shared across the pipeline.

Everything downstream (augmentation, training, the feedback service) passes
these records around, so they are deliberately plain dataclasses with
explicit validation helpers rather than anything framework-bound.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

MAX_CAPTION_TOKENS = 50

# Lowercase, drop punctuation except apostrophes, split on whitespace.
_PUNCT_RE = re.compile(r"[^\w\s']", flags=re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Deterministic caption tokenization.

    Lowercases, strips punctuation (apostrophes survive, so "dog's" stays a
    single token), splits on whitespace, and truncates to the caption length
    cap.
    """
    cleaned = _PUNCT_RE.sub(" ", text.lower())
    return cleaned.split()[:MAX_CAPTION_TOKENS]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float
    label: str | None = None

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError(f"bbox corner must be non-negative, got ({self.x}, {self.y})")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"bbox extents must be positive, got ({self.w}, {self.h})")

    @property
    def area(self) -> float:
        return self.w * self.h

    def iou(self, other: "BBox") -> float:
        ix = max(0.0, min(self.x + self.w, other.x + other.w) - max(self.x, other.x))
        iy = max(0.0, min(self.y + self.h, other.y + other.h) - max(self.y, other.y))
        inter = ix * iy
        if inter == 0.0:
            return 0.0
        return inter / (self.area + other.area - inter)


@dataclass
class ImageRecord:
    image_id: str
    pixel_data: np.ndarray  # (H, W, 3) uint8
    width_px: int
    height_px: int
    bboxes: list[BBox] = field(default_factory=list)
    split_tag: str = "train"

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.pixel_data.shape != (self.height_px, self.width_px, 3):
            raise ValueError(
                f"pixel_data shape {self.pixel_data.shape} does not match "
                f"({self.height_px}, {self.width_px}, 3)"
            )
        for b in self.bboxes:
            if b.x + b.w > self.width_px + 1e-6 or b.y + b.h > self.height_px + 1e-6:
                raise ValueError(f"bbox {b} exceeds image bounds {self.width_px}x{self.height_px}")


PROVENANCES = ("ground_truth", "predicted", "corrected", "augmented")


@dataclass(frozen=True)
class CaptionRecord:
    caption_id: str
    image_id: str
    text: str
    tokens: tuple[str, ...]
    provenance: str = "ground_truth"
    method_tag: str | None = None
    parent_id: str | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance == "augmented" and (self.parent_id is None or self.method_tag is None):
            raise ValueError("augmented captions require parent_id and method_tag")

    @classmethod
    def from_text(
        cls,
        caption_id: str,
        image_id: str,
        text: str,
        provenance: str = "ground_truth",
        method_tag: str | None = None,
        parent_id: str | None = None,
    ) -> "CaptionRecord":
        return cls(
            caption_id=caption_id,
            image_id=image_id,
            text=text,
            tokens=tuple(tokenize(text)),
            provenance=provenance,
            method_tag=method_tag,
            parent_id=parent_id,
        )

    def with_text(self, text: str, **changes) -> "CaptionRecord":
        return replace(self, text=text, tokens=tuple(tokenize(text)), **changes)

    def to_dict(self) -> dict:
        return {
            "caption_id": self.caption_id,
            "image_id": self.image_id,
            "text": self.text,
            "tokens": list(self.tokens),
            "provenance": self.provenance,
            "method_tag": self.method_tag,
            "parent_id": self.parent_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaptionRecord":
        return cls(
            caption_id=d["caption_id"],
            image_id=d["image_id"],
            text=d["text"],
            tokens=tuple(d["tokens"]),
            provenance=d.get("provenance", "ground_truth"),
            method_tag=d.get("method_tag"),
            parent_id=d.get("parent_id"),
        )


def normalized_key(text: str) -> tuple[str, ...]:
    """Dedup key for augmentation outputs: case-folded token sequence."""
    return tuple(tokenize(text))
