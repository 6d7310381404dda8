"""Step-wise model updates with sparse episodic memory replay.

Every consumed training instance is written to a bounded reservoir-sampled
memory; after every `replay_every` batches of new data one batch of past
experiences is replayed, which is what keeps earlier tasks from being
forgotten during sequential adaptation.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import evaluate
from .records import CaptionRecord, ImageRecord

VALID_EXPERIENCE_PROVENANCE = {"ground_truth", "corrected", "augmented"}


@dataclass
class Experience:
    image_id: str
    caption: CaptionRecord
    write_step: int = 0

    def __post_init__(self):
        if self.caption.provenance not in VALID_EXPERIENCE_PROVENANCE:
            raise ValueError(
                f"experience captions must come from {sorted(VALID_EXPERIENCE_PROVENANCE)}, "
                f"got {self.caption.provenance!r}"
            )


class ReplayMemory:
    """Bounded experience store with reservoir eviction."""

    def __init__(self, capacity: int = 1000, replay_every: int = 10, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if replay_every < 1:
            raise ValueError("replay_every must be >= 1")
        self.capacity = capacity
        self.replay_every = replay_every
        self.seed = seed
        self.entries: list[Experience] = []
        self.seen_count = 0
        self._rng = random.Random(seed)

    def __len__(self) -> int:
        return len(self.entries)

    def write(self, e: Experience) -> None:
        """Append below capacity; above it, keep with probability capacity/seen."""
        self.seen_count += 1
        if len(self.entries) < self.capacity:
            self.entries.append(e)
            return
        slot = self._rng.randrange(self.seen_count)
        if slot < self.capacity:
            self.entries[slot] = e

    def sample(self, batch_size: int, seed: int | None = None) -> list[Experience]:
        """Uniform sample, without replacement when batch_size <= |entries|."""
        if not self.entries:
            return []
        rng = random.Random(seed) if seed is not None else self._rng
        if batch_size >= len(self.entries):
            if batch_size == len(self.entries):
                out = list(self.entries)
                rng.shuffle(out)
                return out
            return [rng.choice(self.entries) for _ in range(batch_size)]
        return rng.sample(self.entries, batch_size)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(json.dumps({
                "header": True,
                "capacity": self.capacity,
                "replay_every": self.replay_every,
                "seen_count": self.seen_count,
                "seed": self.seed,
            }) + "\n")
            for e in self.entries:
                f.write(json.dumps({
                    "image_id": e.image_id,
                    "caption": e.caption.to_dict(),
                    "write_step": e.write_step,
                }) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ReplayMemory":
        with open(path) as f:
            header = json.loads(f.readline())
            mem = cls(
                capacity=header["capacity"],
                replay_every=header["replay_every"],
                seed=header["seed"],
            )
            mem.seen_count = header["seen_count"]
            for line in f:
                d = json.loads(line)
                mem.entries.append(Experience(
                    image_id=d["image_id"],
                    caption=CaptionRecord.from_dict(d["caption"]),
                    write_step=d["write_step"],
                ))
        return mem


# module-level aliases matching the operation names used elsewhere
def memory_write(mem: ReplayMemory, e: Experience) -> ReplayMemory:
    mem.write(e)
    return mem


def memory_sample(mem: ReplayMemory, batch_size: int, seed: int | None = None):
    return mem.sample(batch_size, seed)


@dataclass
class TrainerConfig:
    batch_size: int = 4
    epochs: int = 1            # passes over the new instances per update
    lr: float | None = None    # None keeps the model's configured rate
    replay_batch_size: int | None = None  # None mirrors batch_size
    write_augmented: bool = True


@dataclass
class UpdateReport:
    task_id: int
    new_batches: int
    replay_batches: int
    final_loss: float
    checkpoint_hash: str
    losses: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "new_batches": self.new_batches,
            "replay_batches": self.replay_batches,
            "final_loss": self.final_loss,
            "checkpoint_hash": self.checkpoint_hash,
        }


def update(
    model,
    new_instances: list[tuple[ImageRecord, CaptionRecord]],
    mem: ReplayMemory,
    config: TrainerConfig | None = None,
    task_id: int = 0,
    image_lookup: dict[str, ImageRecord] | None = None,
) -> UpdateReport:
    """Train on new instances, replaying one memory batch every
    `mem.replay_every` new batches, and write every consumed instance to
    memory. Replay batches re-encode images through `image_lookup` (falling
    back to the images referenced by the new instances)."""
    config = config or TrainerConfig()
    if not new_instances:
        return UpdateReport(task_id, 0, 0, math.nan, model.content_hash())

    lookup = dict(image_lookup or {})
    for img, _ in new_instances:
        lookup.setdefault(img.image_id, img)

    new_batches = 0
    replay_batches = 0
    losses: list[float] = []
    replay_bs = config.replay_batch_size or config.batch_size
    for _epoch in range(config.epochs):
        for start in range(0, len(new_instances), config.batch_size):
            batch = new_instances[start:start + config.batch_size]
            losses.append(model.train_step(batch, lr=config.lr))
            new_batches += 1
            for img, cap in batch:
                if cap.provenance == "augmented" and not config.write_augmented:
                    continue
                mem.write(Experience(image_id=img.image_id, caption=cap, write_step=model.step_count))
            if new_batches % mem.replay_every == 0:
                replayed = mem.sample(replay_bs)
                replay = [
                    (lookup[e.image_id], e.caption) for e in replayed if e.image_id in lookup
                ]
                if replay:
                    model.train_step(replay, lr=config.lr)
                    replay_batches += 1
    return UpdateReport(
        task_id=task_id,
        new_batches=new_batches,
        replay_batches=replay_batches,
        final_loss=losses[-1],
        checkpoint_hash=model.content_hash(),
        losses=losses,
    )


def _eval_set_for(image_ids, images_by_id, refs_by_image):
    return [
        (images_by_id[i], refs_by_image[i])
        for i in sorted(image_ids)
        if i in images_by_id and refs_by_image.get(i)
    ]


def train_disjoint(
    model,
    splits,
    mem: ReplayMemory,
    images: list[ImageRecord],
    captions: list[CaptionRecord],
    config: TrainerConfig | None = None,
) -> list[list[float]]:
    """Sequential training over task splits.

    Returns the evaluation matrix R of shape (T, T+1): after finishing task i,
    row i holds BLEU-4 on each task j <= i (later columns NaN) plus a final
    union column over all tasks seen so far.
    """
    if not splits:
        raise ValueError("splits must be non-empty")
    seen: set[str] = set()
    for s in splits:
        if seen & s.image_ids:
            raise ValueError("splits must be disjoint")
        seen |= s.image_ids

    config = config or TrainerConfig()
    images_by_id = {i.image_id: i for i in images}
    refs_by_image: dict[str, list[list[str]]] = {}
    caps_by_image: dict[str, list[CaptionRecord]] = {}
    for c in captions:
        refs_by_image.setdefault(c.image_id, []).append(list(c.tokens))
        caps_by_image.setdefault(c.image_id, []).append(c)

    t = len(splits)
    r_matrix = [[math.nan] * (t + 1) for _ in range(t)]
    for i, split in enumerate(splits):
        instances = [
            (images_by_id[iid], cap)
            for iid in sorted(split.image_ids)
            if iid in images_by_id
            for cap in caps_by_image.get(iid, [])
        ]
        update(model, instances, mem, config, task_id=i, image_lookup=images_by_id)
        union_ids: set[str] = set()
        for j in range(i + 1):
            task_eval = _eval_set_for(splits[j].image_ids, images_by_id, refs_by_image)
            union_ids |= splits[j].image_ids
            if task_eval:
                r_matrix[i][j] = evaluate(model, task_eval)["bleu4"]
        union_eval = _eval_set_for(union_ids, images_by_id, refs_by_image)
        if union_eval:
            r_matrix[i][t] = evaluate(model, union_eval)["bleu4"]
    return r_matrix


def forgetting(r_matrix: list[list[float]], j: int) -> float:
    """Peak-minus-final performance on task j: max over i < T of R[i][j] - R[T][j]."""
    t = len(r_matrix) - 1
    if not 0 <= j < len(r_matrix[0]) - 1:
        raise ValueError(f"task index {j} out of range")
    if t < 1:
        return 0.0
    prior = [r_matrix[i][j] for i in range(t) if not math.isnan(r_matrix[i][j])]
    if not prior:
        return 0.0
    return max(prior) - r_matrix[t][j]
