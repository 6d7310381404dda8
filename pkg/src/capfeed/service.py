"""Event-sourced feedback service.

All state the service needs between restarts lives in one append-only JSONL
event log; in-memory state is a pure fold over that log, so `replay_log`
can rebuild it byte-for-byte (verified by canonical state hashes). Model
serving reads an immutable snapshot that is swapped atomically after each
update, keeping /predict responsive while training runs.

Generated augmentations are logged as `augmentation_set` events: the text
backends are not required to be deterministic, so the log, not the backend,
is the source of truth during replay.
"""
from __future__ import annotations

import hashlib
import io
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from PIL import Image
from pydantic import BaseModel

from . import continual, image_augment, metrics, text_augment
from .captioner import Captioner
from .records import BBox, CaptionRecord, ImageRecord

SCHEMA_VERSION = 1

EVENT_KINDS = (
    "prediction",
    "caption_correction",
    "bbox_annotation",
    "augmentation_set",
    "augmentation_rating",
    "update_trigger",
)


class EventLog:
    """Append-only JSONL log; every append is flushed and fsynced before the
    event id is handed back."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._seq = 0
        if self.path.exists():
            for event in self.read():
                self._seq = event["seq"]
        self._fh = open(self.path, "a")

    def append(self, kind: str, image_id: str | None, payload: dict) -> dict:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            self._seq += 1
            event = {
                "v": SCHEMA_VERSION,
                "seq": self._seq,
                "event_id": f"evt-{self._seq:06d}",
                "ts_ms": int(time.time() * 1000),
                "image_id": image_id,
                "kind": kind,
                "payload": payload,
            }
            self._fh.write(json.dumps(event) + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())
            return event

    def read(self) -> list[dict]:
        events = []
        with open(self.path) as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"corrupt event log line {lineno}: {exc}") from exc
        return events

    def close(self):
        self._fh.close()


@dataclass
class ServiceState:
    """Pure fold of the event log."""

    last_seq: int = 0
    predictions: dict[str, dict] = field(default_factory=dict)      # image_id -> payload
    corrections: dict[str, dict] = field(default_factory=dict)      # event_id -> record
    augmentation_sets: dict[str, dict] = field(default_factory=dict)  # set_id -> record
    consumed_through: int = 0
    last_update_report: dict | None = field(default=None)

    def apply(self, event: dict) -> None:
        if event["seq"] <= self.last_seq:
            raise ValueError(f"event seq {event['seq']} not increasing past {self.last_seq}")
        self.last_seq = event["seq"]
        kind = event["kind"]
        payload = event["payload"]
        if kind == "prediction":
            self.predictions[event["image_id"]] = {"text": payload["text"], "seq": event["seq"]}
        elif kind == "caption_correction":
            self.corrections[event["event_id"]] = {
                "seq": event["seq"],
                "image_id": event["image_id"],
                "text": payload["text"],
            }
        elif kind == "augmentation_set":
            self.augmentation_sets[payload["set_id"]] = {
                "seq": event["seq"],
                "set_id": payload["set_id"],
                "image_id": event["image_id"],
                "source_caption_id": payload["source_caption_id"],
                "variants": [dict(v) for v in payload["variants"]],
            }
        elif kind == "augmentation_rating":
            record = self.augmentation_sets[payload["set_id"]]
            ratings = payload.get("ratings") or {}
            ranks = payload.get("ranks") or {}
            for variant in record["variants"]:
                aug_id = variant["augmentation_id"]
                if aug_id in ratings:
                    variant["rating"] = ratings[aug_id]
                if aug_id in ranks:
                    variant["rank"] = ranks[aug_id]
        elif kind == "update_trigger":
            self.consumed_through = payload["consumed_through"]
            self.last_update_report = payload["report"]
        elif kind == "bbox_annotation":
            pass  # boxes feed augmentation sets, logged separately
        else:  # pragma: no cover
            raise ValueError(kind)

    def canonical(self) -> dict:
        return {
            "last_seq": self.last_seq,
            "predictions": dict(sorted(self.predictions.items())),
            "corrections": dict(sorted(self.corrections.items())),
            "augmentation_sets": dict(sorted(self.augmentation_sets.items())),
            "consumed_through": self.consumed_through,
            "last_update_report": self.last_update_report,
        }

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.canonical(), sort_keys=True).encode()
        ).hexdigest()


def replay_log(log_path: str | Path) -> ServiceState:
    """Rebuild service state by folding the event log from the start."""
    state = ServiceState()
    log = EventLog(log_path)
    try:
        for event in log.read():
            state.apply(event)
    finally:
        log.close()
    return state


@dataclass
class ServiceConfig:
    log_path: str = "events.jsonl"
    checkpoint_dir: str = "checkpoints"
    batch_size: int = 4
    update_epochs: int = 8
    memory_capacity: int = 1000
    replay_every: int = 10
    image_aug_k: int = 3
    rank_cutoff: int = 5
    max_len: int = 20
    seed: int = 0


class FeedbackService:
    """Business logic behind the HTTP endpoints; the FastAPI app delegates here."""

    def __init__(
        self,
        model: Captioner,
        images: list[ImageRecord],
        config: ServiceConfig | None = None,
        backend: text_augment.TextBackend | None = None,
        lexicon: text_augment.SynonymLexicon | None = None,
        memory: continual.ReplayMemory | None = None,
    ):
        self.config = config or ServiceConfig()
        self.images = {img.image_id: img for img in images}
        self.model = model
        self.snapshot = model.clone()
        self.memory = memory or continual.ReplayMemory(
            capacity=self.config.memory_capacity,
            replay_every=self.config.replay_every,
            seed=self.config.seed,
        )
        self.augment_config = text_augment.AugmentConfig(
            backend=backend or text_augment.IdentityBackend(),
            lexicon=lexicon or text_augment.DEFAULT_LEXICON,
            seed=self.config.seed,
        )
        self.log = EventLog(self.config.log_path)
        self.state = ServiceState()
        for event in self.log.read():
            self.state.apply(event)
        self._update_lock = threading.Lock()
        self._snapshot_lock = threading.Lock()
        self.latest_metrics: dict | None = (
            dict(self.state.last_update_report) if self.state.last_update_report else None
        )

    # --- helpers ----------------------------------------------------------

    def _append(self, kind, image_id, payload) -> dict:
        event = self.log.append(kind, image_id, payload)
        self.state.apply(event)
        return event

    def _require_image(self, image_id: str) -> ImageRecord:
        if image_id not in self.images:
            raise HTTPException(status_code=404, detail=f"unknown image {image_id}")
        return self.images[image_id]

    # --- operations -------------------------------------------------------

    def predict(self, image_id: str | None = None, upload: bytes | None = None) -> dict:
        if upload is not None:
            if not upload:
                raise HTTPException(status_code=400, detail="empty image upload")
            try:
                with Image.open(io.BytesIO(upload)) as im:
                    pixels = np.asarray(im.convert("RGB"), dtype=np.uint8)
            except Exception:
                raise HTTPException(status_code=400, detail="malformed image upload")
            image_id = image_id or f"upload-{hashlib.sha1(upload).hexdigest()[:12]}"
            image = ImageRecord(
                image_id=image_id,
                pixel_data=pixels,
                width_px=pixels.shape[1],
                height_px=pixels.shape[0],
            )
            self.images[image_id] = image
        else:
            if image_id is None:
                raise HTTPException(status_code=400, detail="image_id or upload required")
            image = self._require_image(image_id)
        with self._snapshot_lock:
            snapshot = self.snapshot
        if snapshot is None:
            raise HTTPException(status_code=503, detail="model updating")
        caption, trace = snapshot.generate(image, mode="greedy", max_len=self.config.max_len)
        attn_summary = trace.weights.max(axis=1).tolist() if trace.weights.size else []
        event = self._append("prediction", image_id, {"text": caption.text})
        return {
            "caption": caption.text,
            "tokens": list(caption.tokens),
            "attention_summary": attn_summary,
            "event_id": event["event_id"],
        }

    def feedback(self, image_id: str, kind: str, payload: dict) -> dict:
        image = self._require_image(image_id)
        if kind == "caption_correction":
            text = payload.get("text", "").strip()
            if not text:
                raise HTTPException(status_code=422, detail="correction text required")
            event = self._append("caption_correction", image_id, {"text": text})
            self._generate_text_augmentations(event, image_id, text)
            return {"event_id": event["event_id"]}
        if kind == "bbox_annotation":
            box = payload.get("bbox", {})
            try:
                x, y, w, h = (float(box[k]) for k in ("x", "y", "w", "h"))
            except (KeyError, TypeError, ValueError):
                raise HTTPException(status_code=422, detail="bbox needs numeric x,y,w,h")
            if not (0 <= x and 0 <= y and w > 0 and h > 0 and x + w <= 1 and y + h <= 1):
                raise HTTPException(
                    status_code=422, detail="bbox must be normalized and inside [0,1]"
                )
            pixel_box = BBox(
                x * image.width_px, y * image.height_px,
                w * image.width_px, h * image.height_px,
                label=box.get("label"),
            )
            event = self._append("bbox_annotation", image_id, {
                "bbox": {"x": x, "y": y, "w": w, "h": h, "label": box.get("label")},
            })
            self._generate_image_augmentations(event, image, pixel_box)
            return {"event_id": event["event_id"]}
        raise HTTPException(status_code=422, detail=f"unsupported feedback kind {kind!r}")

    def _generate_text_augmentations(self, event: dict, image_id: str, text: str):
        source = CaptionRecord.from_text(
            caption_id=f"corr-{event['seq']}", image_id=image_id, text=text,
            provenance="corrected",
        )
        aug_set = text_augment.augment_caption(source, self.augment_config)
        set_id = f"augset-{event['seq']}"
        variants = [
            {
                "augmentation_id": f"{set_id}-{i}",
                "kind": "text",
                "text": v.text,
                "method_tag": v.method_tag,
                "rating": None,
                "rank": None,
            }
            for i, v in enumerate(aug_set.variants)
        ]
        self._append("augmentation_set", image_id, {
            "set_id": set_id,
            "source_caption_id": source.caption_id,
            "source_event_id": event["event_id"],
            "source_text": text,
            "variants": variants,
        })

    def _generate_image_augmentations(self, event: dict, image: ImageRecord, box: BBox):
        annotated = ImageRecord(
            image_id=image.image_id,
            pixel_data=np.asarray(image.pixel_data),
            width_px=image.width_px,
            height_px=image.height_px,
            bboxes=list(image.bboxes) + [box],
            split_tag=image.split_tag,
        )
        out_dir = Path(self.config.checkpoint_dir) / "augmented_images"
        out_dir.mkdir(parents=True, exist_ok=True)
        set_id = f"augset-{event['seq']}"
        variants = []
        for i, aug in enumerate(
            image_augment.augment_image(annotated, k=self.config.image_aug_k, seed=event["seq"])
        ):
            path = out_dir / f"{set_id}-{i}.png"
            Image.fromarray(np.asarray(aug.pixel_data)).save(path)
            variants.append({
                "augmentation_id": f"{set_id}-{i}",
                "kind": "image",
                "image_path": str(path),
                "bboxes": [
                    {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "label": b.label}
                    for b in aug.bboxes
                ],
                "method_tag": "image",
                "rating": None,
                "rank": None,
            })
        self._append("augmentation_set", image.image_id, {
            "set_id": set_id,
            "source_caption_id": None,
            "source_event_id": event["event_id"],
            "variants": variants,
        })

    def augmentations_for(self, image_id: str) -> list[dict]:
        self._require_image(image_id)
        return [
            rec for rec in self.state.augmentation_sets.values()
            if rec["image_id"] == image_id
        ]

    def rate(self, set_id: str, ratings: dict | None = None, ranks: dict | None = None) -> dict:
        if set_id not in self.state.augmentation_sets:
            raise HTTPException(status_code=404, detail=f"unknown augmentation set {set_id}")
        record = self.state.augmentation_sets[set_id]
        known = {v["augmentation_id"] for v in record["variants"]}
        ratings = ratings or {}
        ranks = ranks or {}
        for aug_id in list(ratings) + list(ranks):
            if aug_id not in known:
                raise HTTPException(status_code=422, detail=f"unknown augmentation {aug_id}")
        for value in ratings.values():
            if value not in ("good", "bad"):
                raise HTTPException(status_code=422, detail="ratings must be good or bad")
        if ranks:
            values = sorted(ranks.values())
            if values != list(range(1, len(values) + 1)):
                raise HTTPException(
                    status_code=422, detail="ranks must be a permutation of 1..m"
                )
        self._append("augmentation_rating", record["image_id"], {
            "set_id": set_id, "ratings": ratings, "ranks": ranks,
        })
        return {"accepted": len(ratings) + len(ranks)}

    def _pending_instances(self) -> list[tuple[ImageRecord, CaptionRecord]]:
        instances = []
        for event_id, corr in sorted(self.state.corrections.items()):
            if corr["seq"] <= self.state.consumed_through:
                continue
            image = self.images.get(corr["image_id"])
            if image is None:
                continue
            corrected = CaptionRecord.from_text(
                caption_id=f"corr-{corr['seq']}", image_id=corr["image_id"],
                text=corr["text"], provenance="corrected",
            )
            instances.append((image, corrected))
        for set_id, rec in sorted(self.state.augmentation_sets.items()):
            if rec["seq"] <= self.state.consumed_through:
                continue
            image = self.images.get(rec["image_id"])
            if image is None:
                continue
            for v in rec["variants"]:
                if v["kind"] != "text":
                    continue
                if v.get("rating") == "bad":
                    continue
                if v.get("rank") is not None and v["rank"] > self.config.rank_cutoff:
                    continue
                instances.append((
                    image,
                    CaptionRecord.from_text(
                        caption_id=v["augmentation_id"], image_id=rec["image_id"],
                        text=v["text"], provenance="augmented",
                        method_tag=v["method_tag"], parent_id=rec["source_caption_id"],
                    ),
                ))
        return instances

    def _correction_eval_set(self):
        refs: dict[str, list[list[str]]] = {}
        for corr in self.state.corrections.values():
            refs.setdefault(corr["image_id"], []).append(
                list(CaptionRecord.from_text("t", corr["image_id"], corr["text"]).tokens)
            )
        return [
            (self.images[i], r) for i, r in sorted(refs.items()) if i in self.images
        ]

    def update(self, since_event_id: str | None = None) -> dict:
        if not self._update_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="update already running")
        try:
            instances = self._pending_instances()
            if not instances:
                report = {
                    "task_id": 0, "new_batches": 0, "replay_batches": 0,
                    "final_loss": None, "checkpoint_hash": self.model.content_hash(),
                    "pre_bleu4": None, "post_bleu4": None,
                }
                return report
            eval_set = self._correction_eval_set()
            pre = metrics.evaluate(self.snapshot, eval_set)["bleu4"] if eval_set else None
            trainer_cfg = continual.TrainerConfig(
                batch_size=self.config.batch_size, epochs=self.config.update_epochs,
            )
            report_obj = continual.update(
                self.model, instances, self.memory, trainer_cfg,
                image_lookup=self.images,
            )
            new_snapshot = self.model.clone()
            with self._snapshot_lock:
                self.snapshot = new_snapshot
            ckpt_dir = Path(self.config.checkpoint_dir)
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            self.model.save(ckpt_dir / "latest.json")
            post = metrics.evaluate(self.snapshot, eval_set)["bleu4"] if eval_set else None
            report = report_obj.to_dict()
            report["final_loss"] = (
                None if report["final_loss"] != report["final_loss"] else report["final_loss"]
            )
            report["pre_bleu4"] = pre
            report["post_bleu4"] = post
            self._append("update_trigger", None, {
                "consumed_through": self.state.last_seq,
                "report": report,
            })
            self.latest_metrics = report
            return report
        finally:
            self._update_lock.release()

    def close(self):
        self.log.close()


# --- HTTP layer -----------------------------------------------------------

class FeedbackBody(BaseModel):
    image_id: str
    kind: str
    payload: dict


class RatingsBody(BaseModel):
    ratings: dict[str, str] | None = None
    ranks: dict[str, int] | None = None


class UpdateBody(BaseModel):
    since_event_id: str | None = None


def create_app(service: FeedbackService) -> FastAPI:
    app = FastAPI(title="capfeed feedback service", version="0.1.0")
    app.state.service = service

    @app.post("/predict")
    async def predict(request: Request):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            file = form.get("file")
            upload = await file.read() if file is not None else b""
            image_id = form.get("image_id")
            return service.predict(image_id=image_id, upload=upload)
        try:
            body = await request.json()
        except Exception:
            raise HTTPException(status_code=400, detail="invalid JSON body")
        return service.predict(image_id=body.get("image_id"))

    @app.post("/feedback")
    def feedback(body: FeedbackBody):
        return service.feedback(body.image_id, body.kind, body.payload)

    @app.get("/augmentations")
    def augmentations(image_id: str):
        return service.augmentations_for(image_id)

    @app.post("/augmentations/{set_id}/ratings")
    def ratings(set_id: str, body: RatingsBody):
        return service.rate(set_id, body.ratings, body.ranks)

    @app.post("/update")
    def update(body: UpdateBody | None = None):
        return service.update(body.since_event_id if body else None)

    @app.get("/metrics")
    def get_metrics():
        if service.latest_metrics is None:
            raise HTTPException(status_code=404, detail="no evaluation report yet")
        return service.latest_metrics

    @app.get("/health")
    def health():
        return {"status": "ok", "events": service.state.last_seq}

    return app
