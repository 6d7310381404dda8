import math
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capfeed.captioner import Captioner, CaptionerConfig
from capfeed.continual import (
    Experience,
    ReplayMemory,
    TrainerConfig,
    forgetting,
    train_disjoint,
    update,
)
from capfeed.dataset import build_vocab
from capfeed.records import CaptionRecord, ImageRecord
from capfeed.task_splitter import TaskSplit


def exp(n, provenance="ground_truth"):
    c = CaptionRecord.from_text(f"c{n}", f"i{n}", f"caption number {n}")
    if provenance != "ground_truth":
        c = c.with_text(c.text, provenance=provenance, parent_id="p", method_tag="synonym")
    return Experience(image_id=f"i{n}", caption=c)


class TestReplayMemory:
    def test_fills_to_capacity_in_order(self):
        mem = ReplayMemory(capacity=3)
        for n in range(3):
            mem.write(exp(n))
        assert [e.image_id for e in mem.entries] == ["i0", "i1", "i2"]

    def test_never_exceeds_capacity(self):
        mem = ReplayMemory(capacity=5, seed=1)
        for n in range(200):
            mem.write(exp(n))
        assert len(mem) == 5
        assert mem.seen_count == 200

    @given(
        capacity=st.integers(1, 20),
        n_writes=st.integers(0, 60),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_size_is_min_of_capacity_and_writes(self, capacity, n_writes, seed):
        mem = ReplayMemory(capacity=capacity, seed=seed)
        for n in range(n_writes):
            mem.write(exp(n))
        assert len(mem) == min(capacity, n_writes)
        assert mem.seen_count == n_writes

    def test_reservoir_inclusion_probability(self):
        # capacity 10, 1000 writes: each item survives with p = 10/1000 = 0.01.
        # 500 independent runs track one marker item; Monte Carlo tolerance
        # is generous relative to the binomial standard error (~0.004)
        hits = 0
        runs = 500
        for seed in range(runs):
            mem = ReplayMemory(capacity=10, seed=seed)
            for n in range(1000):
                mem.write(exp(n))
            hits += any(e.image_id == "i0" for e in mem.entries)
        rate = hits / runs
        assert rate == pytest.approx(0.01, abs=0.012)

    def test_recent_item_same_inclusion_probability(self):
        hits = 0
        runs = 500
        for seed in range(runs):
            mem = ReplayMemory(capacity=10, seed=seed)
            for n in range(1000):
                mem.write(exp(n))
            hits += any(e.image_id == "i999" for e in mem.entries)
        assert hits / runs == pytest.approx(0.01, abs=0.012)

    def test_sampling_without_replacement(self):
        mem = ReplayMemory(capacity=10)
        for n in range(10):
            mem.write(exp(n))
        batch = mem.sample(6, seed=0)
        ids = [e.image_id for e in batch]
        assert len(ids) == len(set(ids)) == 6

    def test_sampling_uniformity(self):
        mem = ReplayMemory(capacity=10)
        for n in range(10):
            mem.write(exp(n))
        counts = Counter()
        draws = 4000
        for s in range(draws):
            for e in mem.sample(1, seed=s):
                counts[e.image_id] += 1
        for image_id in (f"i{n}" for n in range(10)):
            assert counts[image_id] / draws == pytest.approx(0.1, abs=0.02)

    def test_oversized_sample_resamples_with_replacement(self):
        mem = ReplayMemory(capacity=4)
        for n in range(3):
            mem.write(exp(n))
        assert len(mem.sample(7, seed=2)) == 7

    def test_empty_sample(self):
        assert ReplayMemory(capacity=4).sample(3) == []

    def test_invalid_capacity(self):
        with pytest.raises(ValueError):
            ReplayMemory(capacity=0)

    def test_rejects_predicted_provenance(self):
        c = CaptionRecord(
            caption_id="c", image_id="i", text="a dog", tokens=("a", "dog"),
            provenance="predicted",
        )
        with pytest.raises(ValueError):
            Experience(image_id="i", caption=c)

    def test_save_load_roundtrip(self, tmp_path):
        mem = ReplayMemory(capacity=5, replay_every=3, seed=9)
        for n in range(8):
            mem.write(exp(n))
        path = tmp_path / "memory.jsonl"
        mem.save(path)
        back = ReplayMemory.load(path)
        assert back.capacity == 5
        assert back.replay_every == 3
        assert back.seen_count == 8
        assert [e.image_id for e in back.entries] == [e.image_id for e in mem.entries]
        assert [e.caption.text for e in back.entries] == [e.caption.text for e in mem.entries]


def toy_instances(n, text="a red circle", id_offset=0, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(id_offset, id_offset + n):
        img = ImageRecord(
            f"i{i}", rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8), 16, 16
        )
        out.append((img, CaptionRecord.from_text(f"c{i}", f"i{i}", text)))
    return out


def toy_model(captions, seed=0):
    vocab = build_vocab(captions)
    cfg = CaptionerConfig(
        input_size=16, grid=2, feature_dim=8, hidden_size=8, embed_size=6,
        attn_dim=6, max_len=8,
    )
    return Captioner(cfg, vocab, seed=seed)


class TestUpdate:
    def test_batch_and_replay_arithmetic(self):
        # 24 instances / batch_size 4 = 6 new batches; replay_every 2 -> 3 replays
        instances = toy_instances(24)
        model = toy_model([c for _, c in instances])
        mem = ReplayMemory(capacity=100, replay_every=2)
        report = update(model, instances, mem, TrainerConfig(batch_size=4))
        assert report.new_batches == 6
        assert report.replay_batches == 3
        assert len(report.losses) == 6

    def test_replay_count_is_floor_of_ratio(self):
        instances = toy_instances(10)
        model = toy_model([c for _, c in instances])
        mem = ReplayMemory(capacity=100, replay_every=4)
        report = update(model, instances, mem, TrainerConfig(batch_size=2))
        # 5 new batches, floor(5 / 4) = 1 replay
        assert report.new_batches == 5
        assert report.replay_batches == 1

    def test_every_instance_written_to_memory(self):
        instances = toy_instances(9)
        model = toy_model([c for _, c in instances])
        mem = ReplayMemory(capacity=100, replay_every=100)
        update(model, instances, mem, TrainerConfig(batch_size=4))
        assert mem.seen_count == 9
        assert {e.image_id for e in mem.entries} == {f"i{i}" for i in range(9)}

    def test_write_augmented_false_skips_augmented(self):
        instances = toy_instances(4)
        img = instances[0][0]
        aug = instances[0][1].with_text(
            "a crimson circle", caption_id="aug0", provenance="augmented",
            parent_id="c0", method_tag="synonym",
        )
        instances.append((img, aug))
        model = toy_model([c for _, c in instances])
        mem = ReplayMemory(capacity=100, replay_every=100)
        update(model, instances, mem, TrainerConfig(batch_size=5, write_augmented=False))
        assert mem.seen_count == 4

    def test_empty_update_is_noop(self):
        instances = toy_instances(2)
        model = toy_model([c for _, c in instances])
        before = model.content_hash()
        report = update(model, [], ReplayMemory(capacity=10))
        assert math.isnan(report.final_loss)
        assert model.content_hash() == before

    def test_report_checkpoint_hash_matches_model(self):
        instances = toy_instances(4)
        model = toy_model([c for _, c in instances])
        report = update(model, instances, ReplayMemory(capacity=10))
        assert report.checkpoint_hash == model.content_hash()

    def test_update_deterministic(self):
        def run():
            instances = toy_instances(12)
            model = toy_model([c for _, c in instances], seed=3)
            mem = ReplayMemory(capacity=20, replay_every=2, seed=5)
            update(model, instances, mem, TrainerConfig(batch_size=4))
            return model.content_hash()

        assert run() == run()


class TestTrainDisjoint:
    def make_setup(self):
        a = toy_instances(4, "a red circle", id_offset=0)
        b = toy_instances(4, "a blue square", id_offset=4)
        images = [img for img, _ in a + b]
        captions = [c for _, c in a + b]
        splits = [
            TaskSplit(split_id=0, image_ids={f"i{i}" for i in range(4)}),
            TaskSplit(split_id=1, image_ids={f"i{i}" for i in range(4, 8)}),
        ]
        model = toy_model(captions)
        return model, splits, images, captions

    def test_r_matrix_shape_and_nan_pattern(self):
        model, splits, images, captions = self.make_setup()
        r = train_disjoint(model, splits, ReplayMemory(capacity=50), images, captions)
        assert len(r) == 2 and all(len(row) == 3 for row in r)
        assert not math.isnan(r[0][0]) and math.isnan(r[0][1])
        assert not math.isnan(r[0][2])  # union column always filled
        assert all(not math.isnan(x) for x in r[1])

    def test_scores_are_bleu_range(self):
        model, splits, images, captions = self.make_setup()
        r = train_disjoint(model, splits, ReplayMemory(capacity=50), images, captions)
        for row in r:
            for x in row:
                assert math.isnan(x) or 0.0 <= x <= 1.0

    def test_overlapping_splits_rejected(self):
        model, splits, images, captions = self.make_setup()
        splits[1].image_ids.add("i0")
        with pytest.raises(ValueError):
            train_disjoint(model, splits, ReplayMemory(capacity=50), images, captions)


class TestForgetting:
    def test_matches_brute_force_oracle(self):
        rng = random.Random(0)
        for _ in range(30):
            t = rng.randint(2, 5)
            r = [[rng.random() for _ in range(t + 1)] for _ in range(t)]
            for j in range(t):
                oracle = max(r[i][j] for i in range(t - 1)) - r[t - 1][j]
                assert forgetting(r, j) == pytest.approx(oracle)

    def test_single_task_zero(self):
        assert forgetting([[0.5, 0.5]], 0) == 0.0

    def test_ignores_nan_rows(self):
        nan = math.nan
        r = [[0.8, nan, nan], [0.6, 0.9, 0.7]]
        assert forgetting(r, 0) == pytest.approx(0.2)
        assert forgetting(r, 1) == 0.0  # no prior finite observation

    def test_out_of_range_task(self):
        with pytest.raises(ValueError):
            forgetting([[0.1, 0.2], [0.3, 0.4]], 5)
