"""Toy-scale attention captioner: conv encoder, LSTM decoder with additive
attention over feature positions, trained with teacher-forced cross-entropy.

The model is small enough to overfit desk-scale fixtures on CPU in seconds
while keeping the benchmark architecture's shape: feature grid in, soft
attention per decoding step, greedy or beam decoding out. Alternate encoder
input (precomputed feature grids) enters through `decode-only` generation via
FeatureGrid, so a heavyweight pre-trained CNN can be swapped in later.
"""
from __future__ import annotations

import base64
import copy
import hashlib
import json

from dataclasses import asdict, dataclass
from pathlib import Path

import cv2
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dataset import END, PAD, START, Vocabulary
from .records import CaptionRecord, ImageRecord


@dataclass
class CaptionerConfig:
    input_size: int = 64        # images are resized to input_size x input_size
    grid: int = 4               # attention positions a = grid * grid
    feature_dim: int = 32       # D
    hidden_size: int = 64       # H
    embed_size: int = 32        # E
    attn_dim: int = 32
    lr: float = 0.01
    momentum: float = 0.9
    attn_reg_weight: float = 0.0  # doubly-stochastic regularizer, off by default
    max_len: int = 20
    beam_size: int = 3
    dtype: str = "float32"

    @property
    def num_positions(self) -> int:
        return self.grid * self.grid


@dataclass
class FeatureGrid:
    vectors: np.ndarray  # (a, D)
    source_image_id: str

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1 or self.vectors.shape[1] < 1:
            raise ValueError(f"feature grid must be (a, D), got {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("feature grid contains non-finite values")


@dataclass
class DecoderState:
    hidden: np.ndarray
    cell: np.ndarray
    prev_token_id: int


@dataclass
class AttentionTrace:
    weights: np.ndarray  # (T, a)


class _Net(nn.Module):
    def __init__(self, cfg: CaptionerConfig, vocab_size: int):
        super().__init__()
        d = cfg.feature_dim
        self.encoder = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 32, 3, stride=2, padding=1), nn.ReLU(),
            # no activation on the final layer: signed features keep the
            # attention scores discriminative on low-contrast inputs
            nn.Conv2d(32, d, 3, stride=2, padding=1),
        )
        self.pool = nn.AdaptiveAvgPool2d((cfg.grid, cfg.grid))
        self.embed = nn.Embedding(vocab_size, cfg.embed_size)
        self.lstm = nn.LSTMCell(cfg.embed_size + d, cfg.hidden_size)
        self.init_h = nn.Linear(d, cfg.hidden_size)
        self.init_c = nn.Linear(d, cfg.hidden_size)
        self.attn_feat = nn.Linear(d, cfg.attn_dim)
        self.attn_hidden = nn.Linear(cfg.hidden_size, cfg.attn_dim)
        self.attn_score = nn.Linear(cfg.attn_dim, 1)
        self.output = nn.Linear(cfg.hidden_size + d, vocab_size)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        feats = self.pool(self.encoder(images))          # (B, D, g, g)
        return feats.flatten(2).transpose(1, 2)          # (B, a, D)

    def init_state(self, features: torch.Tensor):
        mean = features.mean(dim=1)
        return torch.tanh(self.init_h(mean)), torch.tanh(self.init_c(mean))

    def attend(self, features: torch.Tensor, hidden: torch.Tensor):
        scores = self.attn_score(
            torch.tanh(self.attn_feat(features) + self.attn_hidden(hidden).unsqueeze(1))
        ).squeeze(-1)                                    # (B, a)
        alpha = F.softmax(scores, dim=-1)
        context = (alpha.unsqueeze(-1) * features).sum(dim=1)
        return context, alpha

    def step(self, token_ids: torch.Tensor, h, c, features):
        context, alpha = self.attend(features, h)
        emb = self.embed(token_ids)
        h, c = self.lstm(torch.cat([emb, context], dim=-1), (h, c))
        logits = self.output(torch.cat([h, context], dim=-1))
        return logits, h, c, alpha


class Captioner:
    """Wraps the network with the dataset-level operations the pipeline uses."""

    def __init__(self, config: CaptionerConfig, vocab: Vocabulary, seed: int = 0):
        self.config = config
        self.vocab = vocab
        self.step_count = 0
        torch.manual_seed(seed)
        self._dtype = torch.float64 if config.dtype == "float64" else torch.float32
        self.net = _Net(config, len(vocab)).to(self._dtype)
        self.optimizer = torch.optim.SGD(
            self.net.parameters(), lr=config.lr, momentum=config.momentum
        )

    # --- preprocessing ----------------------------------------------------

    def _to_tensor(self, image: ImageRecord) -> torch.Tensor:
        pixels = np.asarray(image.pixel_data)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixel data, got shape {pixels.shape}")
        s = self.config.input_size
        if pixels.shape[:2] != (s, s):
            pixels = cv2.resize(pixels, (s, s), interpolation=cv2.INTER_AREA)
        arr = pixels.astype(np.float64 if self._dtype == torch.float64 else np.float32) / 255.0
        return torch.from_numpy(arr).permute(2, 0, 1).to(self._dtype)

    # --- spec operations --------------------------------------------------

    @torch.no_grad()
    def encode(self, image: ImageRecord) -> FeatureGrid:
        feats = self.net.encode(self._to_tensor(image).unsqueeze(0))[0]
        return FeatureGrid(vectors=feats.cpu().numpy(), source_image_id=image.image_id)

    @torch.no_grad()
    def decode_step(self, state: DecoderState, features: FeatureGrid):
        if not 0 <= state.prev_token_id < len(self.vocab):
            raise ValueError(f"prev_token_id {state.prev_token_id} outside vocabulary")
        h = torch.from_numpy(np.asarray(state.hidden)).to(self._dtype).unsqueeze(0)
        c = torch.from_numpy(np.asarray(state.cell)).to(self._dtype).unsqueeze(0)
        feats = torch.from_numpy(features.vectors).to(self._dtype).unsqueeze(0)
        token = torch.tensor([state.prev_token_id])
        logits, h, c, alpha = self.net.step(token, h, c, feats)
        probs = F.softmax(logits, dim=-1)[0].cpu().numpy()
        new_state = DecoderState(
            hidden=h[0].cpu().numpy(), cell=c[0].cpu().numpy(), prev_token_id=state.prev_token_id
        )
        return probs, new_state, alpha[0].cpu().numpy()

    @torch.no_grad()
    def generate(
        self,
        image: ImageRecord,
        mode: str = "greedy",
        beam_size: int | None = None,
        max_len: int | None = None,
    ) -> tuple[CaptionRecord, AttentionTrace]:
        max_len = max_len if max_len is not None else self.config.max_len
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        if mode not in ("greedy", "beam"):
            raise ValueError(f"unknown generation mode {mode!r}")
        beam = 1 if mode == "greedy" else (beam_size or self.config.beam_size)
        if beam < 1:
            raise ValueError("beam_size must be >= 1")

        features = self.net.encode(self._to_tensor(image).unsqueeze(0))
        h0, c0 = self.net.init_state(features)
        # hypotheses: (log_prob, token_ids, h, c, attn_rows, finished)
        hyps = [(0.0, [START], h0, c0, [], False)]
        for _ in range(max_len):
            candidates = []
            for lp, ids, h, c, rows, done in hyps:
                if done:
                    candidates.append((lp, ids, h, c, rows, True))
                    continue
                token = torch.tensor([ids[-1]])
                logits, nh, nc, alpha = self.net.step(token, h, c, features)
                logp = F.log_softmax(logits, dim=-1)[0]
                top = torch.topk(logp, min(beam, logp.shape[0]))
                for val, idx in zip(top.values.tolist(), top.indices.tolist()):
                    candidates.append(
                        (lp + val, ids + [idx], nh, nc, rows + [alpha[0].cpu().numpy()], idx == END)
                    )
            candidates.sort(key=lambda t: -t[0])
            hyps = candidates[:beam]
            if all(h[-1] for h in hyps):
                break

        _, ids, _, _, rows, _ = hyps[0]
        token_ids = [i for i in ids[1:] if i not in (PAD, START, END)]
        tokens = self.vocab.decode(token_ids)
        caption = CaptionRecord(
            caption_id=f"pred-{image.image_id}-{self.step_count}",
            image_id=image.image_id,
            text=" ".join(tokens),
            tokens=tuple(tokens),
            provenance="predicted",
        )
        a = self.config.num_positions
        trace = AttentionTrace(
            weights=np.stack(rows) if rows else np.zeros((0, a))
        )
        return caption, trace

    def _encode_targets(self, captions: list[CaptionRecord]) -> torch.Tensor:
        seqs = [[START] + self.vocab.encode(c.tokens) + [END] for c in captions]
        max_t = max(len(s) for s in seqs)
        out = torch.full((len(seqs), max_t), PAD, dtype=torch.long)
        for i, s in enumerate(seqs):
            out[i, : len(s)] = torch.tensor(s)
        return out

    def compute_loss(self, batch) -> torch.Tensor:
        images = torch.stack([self._to_tensor(img) for img, _ in batch])
        targets = self._encode_targets([cap for _, cap in batch])
        features = self.net.encode(images)
        h, c = self.net.init_state(features)
        total = torch.zeros((), dtype=self._dtype)
        count = 0
        alphas = []
        for t in range(targets.shape[1] - 1):
            logits, h, c, alpha = self.net.step(targets[:, t], h, c, features)
            tgt = targets[:, t + 1]
            mask = tgt != PAD
            if mask.any():
                total = total + F.cross_entropy(logits[mask], tgt[mask], reduction="sum")
                count += int(mask.sum())
            alphas.append(alpha)
        loss = total / max(count, 1)
        if self.config.attn_reg_weight > 0 and alphas:
            stacked = torch.stack(alphas)                       # (T, B, a)
            loss = loss + self.config.attn_reg_weight * ((1.0 - stacked.sum(dim=0)) ** 2).mean()
        return loss

    def train_step(self, batch, lr: float | None = None) -> float:
        """One teacher-forced optimizer step; returns mean per-token CE."""
        if not batch:
            raise ValueError("batch must be non-empty")
        if lr is not None:
            for group in self.optimizer.param_groups:
                group["lr"] = lr
        self.optimizer.zero_grad()
        loss = self.compute_loss(batch)
        if not torch.isfinite(loss):
            raise ArithmeticError(
                f"non-finite loss at step {self.step_count}: {loss.item()!r}"
            )
        loss.backward()
        self.optimizer.step()
        self.step_count += 1
        return float(loss.item())

    # --- checkpointing ----------------------------------------------------

    def _state_payload(self) -> dict:
        params = {}
        for name, tensor in sorted(self.net.state_dict().items()):
            arr = tensor.detach().cpu().numpy()
            params[name] = {
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "data": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii"),
            }
        return {
            "config": asdict(self.config),
            "vocab": self.vocab.to_dict(),
            "step_count": self.step_count,
            "params": params,
        }

    def content_hash(self) -> str:
        payload = json.dumps(self._state_payload(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def save(self, path: str | Path) -> str:
        payload = self._state_payload()
        payload["content_hash"] = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w") as f:
            json.dump(payload, f)
        tmp.replace(path)
        return payload["content_hash"]

    @classmethod
    def load(cls, path: str | Path) -> "Captioner":
        with open(path) as f:
            payload = json.load(f)
        stored_hash = payload.pop("content_hash", None)
        if stored_hash is not None:
            actual = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
            if actual != stored_hash:
                raise ValueError(f"checkpoint hash mismatch: {actual} != {stored_hash}")
        config = CaptionerConfig(**payload["config"])
        vocab = Vocabulary.from_dict(payload["vocab"])
        model = cls(config, vocab)
        state = {}
        for name, spec in payload["params"].items():
            arr = np.frombuffer(
                base64.b64decode(spec["data"]), dtype=np.dtype(spec["dtype"])
            ).reshape(spec["shape"])
            state[name] = torch.from_numpy(arr.copy())
        model.net.load_state_dict(state)
        model.step_count = payload["step_count"]
        return model

    def clone(self) -> "Captioner":
        """Deep copy used for immutable serving snapshots."""
        twin = Captioner(copy.deepcopy(self.config), self.vocab)
        twin.net.load_state_dict(copy.deepcopy(self.net.state_dict()))
        twin.step_count = self.step_count
        return twin
