"""capfeed command line interface."""
from __future__ import annotations

import json
import random
from pathlib import Path

import click

from . import continual, dataset, image_augment, joint_augment, report, task_splitter, text_augment
from .captioner import Captioner, CaptionerConfig
from .metrics import evaluate
from .records import CaptionRecord


@click.group()
def main():
    """Interactive image-captioning adaptation toolkit."""


# --- data ------------------------------------------------------------------

@main.group()
def data():
    """Dataset ingestion."""


@data.command("load")
@click.option("--format", "fmt", type=click.Choice(["coco", "vizwiz"]), required=True)
@click.option("--annotations", type=click.Path(exists=True), required=True,
              help="COCO annotation JSON file, or VizWiz annotation directory")
@click.option("--splits", "split_file", type=click.Path(exists=True), default=None,
              help="Karpathy-style split map (COCO only)")
@click.option("--images", "images_dir", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True)
def data_load(fmt, annotations, split_file, images_dir, out):
    errors: list[str] = []
    if fmt == "coco":
        images, captions = dataset.load_coco(annotations, split_file, images_dir, errors=errors)
    else:
        images, captions = dataset.load_vizwiz(annotations, images_dir, errors=errors)
    dataset.save_dataset(out, images, captions)
    click.echo(f"loaded {len(images)} images, {len(captions)} captions -> {out}")
    for msg in errors:
        click.echo(f"warning: {msg}", err=True)


# --- pretraining -----------------------------------------------------------

@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--steps", type=int, default=500)
@click.option("--batch-size", type=int, default=4)
@click.option("--min-freq", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), required=True)
@click.option("--report-dir", type=click.Path(), default=None)
def pretrain(data_dir, config_file, steps, batch_size, min_freq, seed, out, report_dir):
    """Pre-train a captioner on a dataset directory."""
    images, captions = dataset.load_dataset(data_dir)
    train_caps = [c for c in captions if c.provenance == "ground_truth"]
    vocab = dataset.build_vocab(train_caps, min_freq=min_freq)
    cfg = CaptionerConfig(**json.load(open(config_file))) if config_file else CaptionerConfig()
    model = Captioner(cfg, vocab, seed=seed)
    by_id = {i.image_id: i for i in images}
    pairs = [(by_id[c.image_id], c) for c in train_caps if c.image_id in by_id]
    rng = random.Random(seed)
    losses = []
    for step in range(steps):
        batch = [pairs[rng.randrange(len(pairs))] for _ in range(min(batch_size, len(pairs)))]
        losses.append(model.train_step(batch))
        if (step + 1) % max(1, steps // 10) == 0:
            click.echo(f"step {step + 1}/{steps} loss {losses[-1]:.4f}")
    content_hash = model.save(out)
    click.echo(f"saved checkpoint {out} ({content_hash[:12]})")
    if report_dir:
        report.write_eval_report(
            {"final_loss": losses[-1], "steps": steps, "vocab_size": len(vocab)},
            report_dir, losses=losses,
        )


# --- augmentation ----------------------------------------------------------

@main.group()
def augment():
    """Data augmentation commands."""


@augment.command("text")
@click.option("--in", "in_file", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--stub-backends", "stub_file", type=click.Path(exists=True), default=None,
              help="JSON stub table; defaults to the identity backend")
@click.option("--lexicon", "lexicon_file", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=0)
def augment_text(in_file, out, stub_file, lexicon_file, seed):
    backend = (
        text_augment.TableBackend.from_file(stub_file)
        if stub_file else text_augment.IdentityBackend()
    )
    lexicon = (
        text_augment.SynonymLexicon.from_file(lexicon_file)
        if lexicon_file else text_augment.DEFAULT_LEXICON
    )
    cfg = text_augment.AugmentConfig(backend=backend, lexicon=lexicon, seed=seed)
    n_in = n_out = 0
    with open(in_file) as fin, open(out, "w") as fout:
        for line in fin:
            caption = CaptionRecord.from_dict(json.loads(line))
            n_in += 1
            for variant in text_augment.augment_caption(caption, cfg).variants:
                fout.write(json.dumps(variant.to_dict()) + "\n")
                n_out += 1
    click.echo(f"{n_in} captions -> {n_out} augmentations ({out})")


@augment.command("image")
@click.option("--in", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("-k", type=int, default=5)
@click.option("--seed", type=int, default=13)
def augment_image_cmd(data_dir, out, k, seed):
    images, captions = dataset.load_dataset(data_dir)
    out_images = []
    for i, img in enumerate(images):
        out_images.extend(image_augment.augment_image(img, k=k, seed=seed + i))
    dataset.save_dataset(out, out_images, captions)
    click.echo(f"{len(images)} images -> {len(out_images)} augmented ({out})")


@augment.command("joint")
@click.option("--src", type=click.Path(exists=True), required=True)
@click.option("--dst", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--template", default=joint_augment.DEFAULT_TEMPLATE)
@click.option("--seed", type=int, default=0)
def augment_joint(src, dst, out, template, seed):
    src_images, _ = dataset.load_dataset(src)
    dst_images, dst_captions = dataset.load_dataset(dst)
    caps_by_image = {}
    for c in dst_captions:
        caps_by_image.setdefault(c.image_id, []).append(c)
    donors = [(i, b) for i in src_images for b in i.bboxes if b.label]
    if not donors:
        raise click.ClickException("no labeled boxes in the source dataset")
    rng = random.Random(seed)
    out_images, out_captions = [], []
    for dst_img in dst_images:
        caps = caps_by_image.get(dst_img.image_id)
        if not caps:
            continue
        src_img, src_box = donors[rng.randrange(len(donors))]
        try:
            new_img, new_cap = joint_augment.cutmix_joint(
                src_img, src_box, dst_img, caps[0],
                placement_seed=rng.randrange(2**31), template=template,
            )
        except joint_augment.PlacementError as exc:
            click.echo(f"skip {dst_img.image_id}: {exc}", err=True)
            continue
        out_images.append(new_img)
        out_captions.append(new_cap)
    dataset.save_dataset(out, out_images, out_captions)
    click.echo(f"wrote {len(out_images)} joint augmentations ({out})")


# --- task splitting --------------------------------------------------------

@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--embeddings", type=click.Path(exists=True), required=True)
@click.option("-k", type=int, default=5)
@click.option("--seed", type=int, default=7)
@click.option("--out", type=click.Path(), required=True)
def split(data_dir, embeddings, k, seed, out):
    """Partition a dataset into concept splits."""
    images, captions = dataset.load_dataset(data_dir)
    table = task_splitter.EmbeddingTable.from_file(embeddings)
    splits = task_splitter.assign_splits(images, captions, k, table, seed=seed)
    with open(out, "w") as f:
        json.dump(task_splitter.splits_to_dict(splits), f, indent=2)
    sizes = {s.split_id: len(s.image_ids) for s in splits}
    click.echo(f"split sizes: {sizes} -> {out}")


# --- updates and sequential training ---------------------------------------

def _load_instances(path, images_by_id):
    instances = []
    with open(path) as f:
        for line in f:
            cap = CaptionRecord.from_dict(json.loads(line))
            img = images_by_id.get(cap.image_id)
            if img is not None:
                instances.append((img, cap))
    return instances


@main.command()
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--instances", type=click.Path(exists=True), required=True,
              help="JSONL of CaptionRecords referencing dataset images")
@click.option("--memory", "memory_file", type=click.Path(), required=True)
@click.option("--batch-size", type=int, default=4)
@click.option("--epochs", type=int, default=1)
@click.option("--out", type=click.Path(), required=True)
def update(ckpt, data_dir, instances, memory_file, batch_size, epochs, out):
    """One step-wise model update with sparse replay."""
    model = Captioner.load(ckpt)
    images, _ = dataset.load_dataset(data_dir)
    by_id = {i.image_id: i for i in images}
    mem = (
        continual.ReplayMemory.load(memory_file)
        if Path(memory_file).exists() else continual.ReplayMemory()
    )
    pairs = _load_instances(instances, by_id)
    rep = continual.update(
        model, pairs, mem,
        continual.TrainerConfig(batch_size=batch_size, epochs=epochs),
        image_lookup=by_id,
    )
    model.save(out)
    mem.save(memory_file)
    click.echo(json.dumps(rep.to_dict(), indent=2))


@main.command("train-disjoint")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--splits", "splits_file", type=click.Path(exists=True), required=True)
@click.option("--memory-capacity", type=int, default=1000)
@click.option("--replay-every", type=int, default=10)
@click.option("--batch-size", type=int, default=4)
@click.option("--epochs", type=int, default=1)
@click.option("--out", type=click.Path(), required=True)
@click.option("--report-dir", type=click.Path(), default="reports")
def train_disjoint_cmd(ckpt, data_dir, splits_file, memory_capacity, replay_every,
                       batch_size, epochs, out, report_dir):
    """Sequential training over task splits, reporting the R matrix."""
    model = Captioner.load(ckpt)
    images, captions = dataset.load_dataset(data_dir)
    with open(splits_file) as f:
        splits = task_splitter.splits_from_dict(json.load(f))
    mem = continual.ReplayMemory(capacity=memory_capacity, replay_every=replay_every)
    r = continual.train_disjoint(
        model, splits, mem, images, captions,
        continual.TrainerConfig(batch_size=batch_size, epochs=epochs),
    )
    model.save(out)
    paths = report.write_r_matrix(r, report_dir)
    click.echo(f"R matrix and figures written to {report_dir} ({sorted(p.name for p in paths.values())})")


@main.command("eval")
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--split-tag", default=None, help="restrict to one split tag")
@click.option("--report", "report_dir", type=click.Path(), default="reports")
def eval_cmd(ckpt, data_dir, split_tag, report_dir):
    """Evaluate a checkpoint; writes report.json/.csv plus figures."""
    model = Captioner.load(ckpt)
    images, captions = dataset.load_dataset(data_dir)
    refs = {}
    for c in captions:
        if c.provenance == "ground_truth":
            refs.setdefault(c.image_id, []).append(list(c.tokens))
    eval_set = [
        (img, refs[img.image_id]) for img in images
        if img.image_id in refs and (split_tag is None or img.split_tag == split_tag)
    ]
    if not eval_set:
        raise click.ClickException("no evaluable images for the given split tag")
    result = evaluate(model, eval_set)
    report.write_eval_report(result, report_dir)
    click.echo(json.dumps(result, indent=2))


# --- service and simulation -------------------------------------------------

@main.command()
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--log", "log_path", type=click.Path(), default="events.jsonl")
@click.option("--checkpoint-dir", type=click.Path(), default="checkpoints")
@click.option("--stub-backends", "stub_file", type=click.Path(exists=True), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(ckpt, data_dir, log_path, checkpoint_dir, stub_file, host, port):
    """Run the feedback HTTP service."""
    import uvicorn

    from .service import FeedbackService, ServiceConfig, create_app

    model = Captioner.load(ckpt)
    images, _ = dataset.load_dataset(data_dir)
    backend = (
        text_augment.TableBackend.from_file(stub_file)
        if stub_file else text_augment.IdentityBackend()
    )
    service = FeedbackService(
        model, images,
        ServiceConfig(log_path=log_path, checkpoint_dir=checkpoint_dir),
        backend=backend,
    )
    uvicorn.run(create_app(service), host=host, port=port)


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True), required=True)
@click.option("--endpoint", required=True, help="base URL of a running service")
@click.option("--rounds", type=int, default=None)
@click.option("--update-every", type=int, default=10)
@click.option("--seed", type=int, default=7)
@click.option("--transcript", type=click.Path(), default=None)
def simulate(data_dir, endpoint, rounds, update_every, seed, transcript):
    """Drive the loop with a simulated user against a live service."""
    import httpx

    from . import sim_user

    images, captions = dataset.load_dataset(data_dir)
    rng = random.Random(seed)
    ordered = sorted(images, key=lambda i: i.image_id)
    rng.shuffle(ordered)
    with httpx.Client(base_url=endpoint, timeout=60.0) as client:
        entries = sim_user.run_loop(
            ordered, captions, client,
            n_rounds=rounds, update_every=update_every,
            transcript_path=transcript,
        )
    click.echo(f"{len(entries)} transcript entries")


@main.command()
@click.option("--out", type=click.Path(), default="docs/openapi.json")
def openapi(out):
    """Dump the HTTP API description."""
    from .dataset import Vocabulary
    from .service import FeedbackService, ServiceConfig, create_app

    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        model = Captioner(CaptionerConfig(), Vocabulary([]))
        service = FeedbackService(
            model, [], ServiceConfig(log_path=f"{tmp}/events.jsonl", checkpoint_dir=tmp)
        )
        spec = create_app(service).openapi()
        service.close()
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as f:
        json.dump(spec, f, indent=2)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
