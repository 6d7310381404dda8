"""Simulated user: drives the feedback loop from ground-truth annotations."""
from __future__ import annotations

import json
import time
from pathlib import Path

from .records import CaptionRecord, ImageRecord

DEFAULT_RATING_THRESHOLD = 0.5


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def token_overlap(prediction, reference) -> float:
    return _jaccard(set(prediction), set(reference))


def simulate_correction(
    image: ImageRecord,
    predicted: CaptionRecord,
    gt_captions: list[CaptionRecord],
) -> dict:
    """Pick the ground-truth caption with maximal token overlap as the
    correction; ties break toward the lowest caption_id."""
    if not gt_captions:
        raise ValueError("gt_captions must be non-empty")
    best = max(
        sorted(gt_captions, key=lambda c: c.caption_id),
        key=lambda c: token_overlap(predicted.tokens, c.tokens),
    )
    return {
        "image_id": image.image_id,
        "kind": "caption_correction",
        "payload": {"text": best.text},
    }


def simulate_rating(
    augmentation: CaptionRecord,
    gt_captions: list[CaptionRecord],
    threshold: float = DEFAULT_RATING_THRESHOLD,
) -> str:
    """good iff the best token-set Jaccard against any reference reaches the
    threshold."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be in [0, 1]")
    best = max(
        (_jaccard(set(augmentation.tokens), set(c.tokens)) for c in gt_captions),
        default=0.0,
    )
    return "good" if best >= threshold else "bad"


def _call(fn, transcript, entry, retries=3):
    last_exc = None
    for _ in range(retries):
        try:
            resp = fn()
            entry["status"] = resp.status_code
            entry["response"] = resp.json()
            transcript.append(entry)
            return resp
        except Exception as exc:  # network failure; retried
            last_exc = exc
            time.sleep(0.05)
    entry["status"] = None
    entry["error"] = repr(last_exc)
    transcript.append(entry)
    return None


def run_loop(
    images: list[ImageRecord],
    gt_captions: list[CaptionRecord],
    client,
    n_rounds: int | None = None,
    update_every: int = 10,
    rating_threshold: float = DEFAULT_RATING_THRESHOLD,
    transcript_path: str | Path | None = None,
) -> list[dict]:
    """One full feedback round per image: predict, correct, fetch
    augmentations, rate them, and trigger an update every `update_every`
    images. `client` is any object with requests-style post/get methods
    (httpx.Client or a FastAPI TestClient)."""
    caps_by_image: dict[str, list[CaptionRecord]] = {}
    for c in gt_captions:
        caps_by_image.setdefault(c.image_id, []).append(c)

    transcript: list[dict] = []
    rounds = images if n_rounds is None else images[:n_rounds]
    for i, image in enumerate(rounds, 1):
        refs = caps_by_image.get(image.image_id, [])
        if not refs:
            continue
        resp = _call(
            lambda: client.post("/predict", json={"image_id": image.image_id}),
            transcript, {"call": "predict", "image_id": image.image_id},
        )
        if resp is None or resp.status_code != 200:
            continue
        predicted = CaptionRecord.from_text(
            "pred", image.image_id, resp.json()["caption"], provenance="predicted"
        )
        correction = simulate_correction(image, predicted, refs)
        resp = _call(
            lambda: client.post("/feedback", json=correction),
            transcript, {"call": "feedback", "image_id": image.image_id},
        )
        resp = _call(
            lambda: client.get("/augmentations", params={"image_id": image.image_id}),
            transcript, {"call": "get-augmentations", "image_id": image.image_id},
        )
        if resp is not None and resp.status_code == 200:
            for aug_set in resp.json():
                text_variants = [v for v in aug_set["variants"] if v["kind"] == "text"]
                if not text_variants:
                    continue
                ratings = {
                    v["augmentation_id"]: simulate_rating(
                        CaptionRecord.from_text("aug", image.image_id, v["text"],
                                                provenance="augmented",
                                                method_tag=v["method_tag"], parent_id="src"),
                        refs, rating_threshold,
                    )
                    for v in text_variants
                }
                set_id = aug_set["set_id"]
                _call(
                    lambda: client.post(f"/augmentations/{set_id}/ratings",
                                        json={"ratings": ratings}),
                    transcript, {"call": "ratings", "image_id": image.image_id,
                                 "set_id": set_id},
                )
        if update_every and i % update_every == 0:
            _call(
                lambda: client.post("/update", json={}),
                transcript, {"call": "update", "after_round": i},
            )

    if transcript_path is not None:
        with open(transcript_path, "w") as f:
            for entry in transcript:
                f.write(json.dumps(entry) + "\n")
    return transcript
