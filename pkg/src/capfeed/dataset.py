"""Dataset ingestion: COCO/VizWiz loaders, vocabulary, dataset directories."""
from __future__ import annotations

import json
import logging
from collections import Counter
from pathlib import Path

import numpy as np
from PIL import Image

from .records import BBox, CaptionRecord, ImageRecord, tokenize

log = logging.getLogger(__name__)

SPECIALS = ("<pad>", "<start>", "<end>", "<unk>")
PAD, START, END, UNK = 0, 1, 2, 3


class Vocabulary:
    """Token <-> id mapping with four reserved specials at ids 0-3."""

    def __init__(self, tokens: list[str]):
        for t in SPECIALS:
            if t in tokens:
                raise ValueError(f"reserved token {t!r} cannot appear in the corpus tokens")
        self.id_to_token: list[str] = list(SPECIALS) + list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def encode(self, tokens) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def to_dict(self) -> dict:
        return {"tokens": self.id_to_token[len(SPECIALS):]}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["tokens"])


def build_vocab(captions: list[CaptionRecord], min_freq: int = 1) -> Vocabulary:
    """Vocabulary of all tokens with corpus frequency >= min_freq.

    Ordering is frequency-descending with lexicographic tie-break, so the
    result is deterministic regardless of caption order.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    freq = Counter()
    for c in captions:
        freq.update(c.tokens)
    kept = [t for t, n in freq.items() if n >= min_freq]
    kept.sort(key=lambda t: (-freq[t], t))
    return Vocabulary(kept)


class _LazyPixels:
    """ndarray stand-in that defers decoding the image file until first use."""

    def __init__(self, path: Path, height: int, width: int):
        self._path = Path(path)
        self.shape = (height, width, 3)
        self._arr: np.ndarray | None = None

    def _load(self) -> np.ndarray:
        if self._arr is None:
            with Image.open(self._path) as im:
                self._arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        return self._arr

    def __array__(self, dtype=None):
        arr = self._load()
        return arr.astype(dtype) if dtype is not None else arr

    def __getitem__(self, idx):
        return self._load()[idx]

    @property
    def dtype(self):
        return np.dtype(np.uint8)


def _read_pixels(path: Path | None, width: int, height: int, lazy: bool):
    if path is None or not Path(path).exists():
        return None
    if lazy:
        return _LazyPixels(path, height, width)
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _coco_style_records(
    ann: dict,
    images_dir: Path | None,
    split_of,
    lazy: bool,
    errors: list[str],
) -> tuple[list[ImageRecord], list[CaptionRecord]]:
    images: list[ImageRecord] = []
    known: set[str] = set()
    for entry in ann.get("images", []):
        image_id = str(entry["id"])
        width = int(entry.get("width", 0)) or None
        height = int(entry.get("height", 0)) or None
        path = images_dir / entry["file_name"] if images_dir and "file_name" in entry else None
        pixels = _read_pixels(path, width or 0, height or 0, lazy)
        if pixels is None:
            if width is None or height is None:
                errors.append(f"image {image_id}: no pixels on disk and no dimensions in metadata")
                continue
            if path is not None:
                errors.append(f"image {image_id}: file {path} missing, using zero placeholder")
            pixels = np.zeros((height, width, 3), dtype=np.uint8)
        else:
            height, width = pixels.shape[0], pixels.shape[1]
        images.append(
            ImageRecord(
                image_id=image_id,
                pixel_data=pixels,
                width_px=width,
                height_px=height,
                split_tag=split_of(image_id),
            )
        )
        known.add(image_id)

    captions: list[CaptionRecord] = []
    for i, entry in enumerate(ann.get("annotations", [])):
        image_id = str(entry["image_id"])
        if image_id not in known:
            errors.append(f"caption {i}: references unknown image {image_id}")
            continue
        captions.append(
            CaptionRecord.from_text(
                caption_id=str(entry.get("id", f"cap-{i}")),
                image_id=image_id,
                text=entry["caption"],
            )
        )
    return images, captions


def load_coco(
    annotation_file: str | Path,
    split_file: str | Path | None = None,
    images_dir: str | Path | None = None,
    lazy: bool = False,
    errors: list[str] | None = None,
) -> tuple[list[ImageRecord], list[CaptionRecord]]:
    """Load a COCO-caption-style annotation file plus a Karpathy-style split map.

    The split file is a JSON object mapping image_id -> train/val/test; images
    absent from it default to train. Missing image files are collected into
    `errors` (zero placeholders are substituted when metadata carries the
    dimensions); malformed JSON is fatal.
    """
    errors = errors if errors is not None else []
    with open(annotation_file) as f:
        ann = json.load(f)
    split_map: dict[str, str] = {}
    if split_file is not None:
        with open(split_file) as f:
            split_map = {str(k): v for k, v in json.load(f).items()}
    images_dir = Path(images_dir) if images_dir is not None else None
    images, captions = _coco_style_records(
        ann, images_dir, lambda i: split_map.get(i, "train"), lazy, errors
    )
    for msg in errors:
        log.warning("load_coco: %s", msg)
    return images, captions


VIZWIZ_VAL_FRACTION = 0.1


def load_vizwiz(
    annotation_dir: str | Path,
    images_dir: str | Path | None = None,
    val_fraction: float = VIZWIZ_VAL_FRACTION,
    lazy: bool = False,
    errors: list[str] | None = None,
) -> tuple[list[ImageRecord], list[CaptionRecord]]:
    """Load VizWiz-format annotations (train.json / val.json in one directory).

    VizWiz publishes no test captions, so the official val set is re-tagged
    test and the last `val_fraction` of training images (by sorted image_id)
    become the validation slice.
    """
    errors = errors if errors is not None else []
    annotation_dir = Path(annotation_dir)
    images_dir = Path(images_dir) if images_dir is not None else None

    all_images: list[ImageRecord] = []
    all_captions: list[CaptionRecord] = []
    for fname, tag in (("train.json", "train"), ("val.json", "test")):
        path = annotation_dir / fname
        if not path.exists():
            continue
        with open(path) as f:
            ann = json.load(f)
        imgs, caps = _coco_style_records(ann, images_dir, lambda _i: tag, lazy, errors)
        all_images.extend(imgs)
        all_captions.extend(caps)

    train_ids = sorted(i.image_id for i in all_images if i.split_tag == "train")
    n_val = int(round(len(train_ids) * val_fraction))
    val_ids = set(train_ids[len(train_ids) - n_val:]) if n_val else set()
    for img in all_images:
        if img.image_id in val_ids:
            img.split_tag = "val"
    for msg in errors:
        log.warning("load_vizwiz: %s", msg)
    return all_images, all_captions


# --- dataset directory (the on-disk format the CLI commands exchange) ---

def save_dataset(out_dir: str | Path, images: list[ImageRecord], captions: list[CaptionRecord]):
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    with open(out_dir / "images.jsonl", "w") as f:
        for img in images:
            Image.fromarray(np.asarray(img.pixel_data)).save(out_dir / "images" / f"{img.image_id}.png")
            f.write(json.dumps({
                "image_id": img.image_id,
                "width_px": img.width_px,
                "height_px": img.height_px,
                "split_tag": img.split_tag,
                "bboxes": [
                    {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "label": b.label}
                    for b in img.bboxes
                ],
            }) + "\n")
    with open(out_dir / "captions.jsonl", "w") as f:
        for cap in captions:
            f.write(json.dumps(cap.to_dict()) + "\n")


def load_dataset(
    data_dir: str | Path, lazy: bool = False
) -> tuple[list[ImageRecord], list[CaptionRecord]]:
    data_dir = Path(data_dir)
    images: list[ImageRecord] = []
    with open(data_dir / "images.jsonl") as f:
        for line in f:
            meta = json.loads(line)
            path = data_dir / "images" / f"{meta['image_id']}.png"
            pixels = _read_pixels(path, meta["width_px"], meta["height_px"], lazy)
            if pixels is None:
                pixels = np.zeros((meta["height_px"], meta["width_px"], 3), dtype=np.uint8)
            images.append(
                ImageRecord(
                    image_id=meta["image_id"],
                    pixel_data=pixels,
                    width_px=meta["width_px"],
                    height_px=meta["height_px"],
                    bboxes=[BBox(**b) for b in meta["bboxes"]],
                    split_tag=meta["split_tag"],
                )
            )
    captions: list[CaptionRecord] = []
    with open(data_dir / "captions.jsonl") as f:
        for line in f:
            captions.append(CaptionRecord.from_dict(json.loads(line)))
    return images, captions
