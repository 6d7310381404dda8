"""Text augmentation: synonym substitution, back-translation, paraphrasing.

Translation and paraphrase models are hidden behind the TextBackend
interface. Deterministic table-driven stubs make the whole pipeline testable
offline; a transformers-backed implementation can be dropped in where model
weights are available.
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .records import CaptionRecord, normalized_key

log = logging.getLogger(__name__)

# Fixed stop-word list; these tokens are never substituted.
STOPWORDS = frozenset(
    "a an the and or but of in on at to for with is are was were be been "
    "this that it as by from".split()
)


class TextBackend(Protocol):
    def translate(self, text: str, src_lang: str, dst_lang: str) -> str: ...

    def paraphrase(self, text: str, n: int) -> list[str]: ...


class IdentityBackend:
    """Echoes its input; useful to exercise dedup paths."""

    def translate(self, text, src_lang, dst_lang):
        return text

    def paraphrase(self, text, n):
        return [text] * n


class TableBackend:
    """Stub backend driven by a JSON map input-string -> output-string(s).

    Translation lookups try the language-qualified key "src->dst:text" first,
    then the bare text; misses fall back to identity. Paraphrase values may be
    a list (taken in order) or a single string.
    """

    def __init__(self, table: dict):
        self.table = dict(table)

    @classmethod
    def from_file(cls, path: str | Path) -> "TableBackend":
        with open(path) as f:
            return cls(json.load(f))

    def _lookup(self, key: str, fallback: str):
        return self.table.get(key, self.table.get(fallback))

    def translate(self, text, src_lang, dst_lang):
        value = self._lookup(f"{src_lang}->{dst_lang}:{text}", text)
        if value is None:
            return text
        return value[0] if isinstance(value, list) else value

    def paraphrase(self, text, n):
        value = self.table.get(f"paraphrase:{text}", self.table.get(text))
        if value is None:
            return [text] * n
        outs = value if isinstance(value, list) else [value]
        return list(outs[:n])


class TransformersBackend:
    """Model-backed implementation using HuggingFace pipelines.

    Requires downloaded weights; construction fails cleanly when the models
    are unavailable, so tests and offline runs use the stubs above.
    """

    def __init__(self, translation_model: str = "Helsinki-NLP/opus-mt-{src}-{dst}",
                 paraphrase_model: str = "ramsrigouthamg/t5_paraphraser"):
        self.translation_model = translation_model
        self.paraphrase_model = paraphrase_model
        self._pipelines: dict = {}

    def _translation(self, src, dst):
        key = (src, dst)
        if key not in self._pipelines:
            from transformers import pipeline

            name = self.translation_model.format(src=src, dst=dst)
            self._pipelines[key] = pipeline("translation", model=name)
        return self._pipelines[key]

    def translate(self, text, src_lang, dst_lang):
        out = self._translation(src_lang, dst_lang)(text)
        return out[0]["translation_text"]

    def paraphrase(self, text, n):
        if "paraphrase" not in self._pipelines:
            from transformers import pipeline

            self._pipelines["paraphrase"] = pipeline("text2text-generation", model=self.paraphrase_model)
        outs = self._pipelines["paraphrase"](
            f"paraphrase: {text}", num_return_sequences=n, num_beams=max(n, 4)
        )
        return [o["generated_text"] for o in outs]


class SynonymLexicon:
    """token -> synonyms map; a token never lists itself."""

    def __init__(self, entries: dict[str, list[str]]):
        self.entries: dict[str, list[str]] = {}
        for token, syns in entries.items():
            kept = [s for s in syns if s != token]
            if kept:
                self.entries[token] = kept

    @classmethod
    def from_file(cls, path: str | Path) -> "SynonymLexicon":
        with open(path) as f:
            return cls(json.load(f))

    def synonyms(self, token: str) -> list[str]:
        return self.entries.get(token, [])

    def __contains__(self, token: str) -> bool:
        return token in self.entries


# Small built-in lexicon covering common caption vocabulary; a WordNet-derived
# file can be loaded with SynonymLexicon.from_file for broader coverage.
DEFAULT_LEXICON = SynonymLexicon({
    "dog": ["puppy", "hound", "canine"],
    "cat": ["kitten", "feline"],
    "man": ["person", "guy", "gentleman"],
    "woman": ["person", "lady"],
    "child": ["kid", "youngster"],
    "picture": ["photo", "image"],
    "photo": ["picture", "image"],
    "small": ["little", "tiny"],
    "large": ["big", "huge"],
    "big": ["large", "huge"],
    "little": ["small", "tiny"],
    "red": ["crimson", "scarlet"],
    "blue": ["azure", "navy"],
    "fast": ["quick", "rapid"],
    "runs": ["sprints", "jogs"],
    "running": ["sprinting", "jogging"],
    "sitting": ["seated", "resting"],
    "standing": ["upright"],
    "street": ["road", "avenue"],
    "table": ["desk", "counter"],
    "bottle": ["flask", "container"],
    "food": ["meal", "dish"],
    "house": ["home", "building"],
    "car": ["automobile", "vehicle"],
})


def _variant(parent: CaptionRecord, text: str, method_tag: str, index: int) -> CaptionRecord:
    return CaptionRecord.from_text(
        caption_id=f"{parent.caption_id}-{method_tag.split(':')[0]}{index}",
        image_id=parent.image_id,
        text=text,
        provenance="augmented",
        method_tag=method_tag,
        parent_id=parent.caption_id,
    )


def synonym_substitute(
    caption: CaptionRecord,
    rate: float = 0.1,
    n_out: int = 3,
    lexicon: SynonymLexicon = DEFAULT_LEXICON,
    seed: int = 0,
) -> list[CaptionRecord]:
    """Replace k = max(1, floor(rate * len)) substitutable tokens per output."""
    if not 0 < rate <= 1:
        raise ValueError("rate must be in (0, 1]")
    if n_out < 1:
        raise ValueError("n_out must be >= 1")
    tokens = list(caption.tokens)
    positions = [
        i for i, t in enumerate(tokens) if t not in STOPWORDS and lexicon.synonyms(t)
    ]
    if not positions:
        return []
    k = min(max(1, int(rate * len(tokens))), len(positions))
    rng = random.Random(seed)
    seen = {normalized_key(caption.text)}
    out: list[CaptionRecord] = []
    for i in range(n_out):
        chosen = rng.sample(positions, k)
        new_tokens = list(tokens)
        for pos in chosen:
            new_tokens[pos] = rng.choice(lexicon.synonyms(tokens[pos]))
        text = " ".join(new_tokens)
        key = normalized_key(text)
        if key in seen:
            continue
        seen.add(key)
        out.append(_variant(caption, text, "synonym", i))
    return out


def back_translate(
    caption: CaptionRecord,
    pivots: list[str] = ("ar", "es"),
    backend: TextBackend = IdentityBackend(),
) -> list[CaptionRecord]:
    """One English -> pivot -> English candidate per pivot language."""
    if not pivots:
        raise ValueError("pivots must be non-empty")
    seen = {normalized_key(caption.text)}
    out: list[CaptionRecord] = []
    for i, pivot in enumerate(pivots):
        try:
            mid = backend.translate(caption.text, "en", pivot)
            text = backend.translate(mid, pivot, "en")
        except Exception as exc:
            log.warning("back-translation via %s failed: %s", pivot, exc)
            continue
        key = normalized_key(text)
        if not text or key in seen:
            continue
        seen.add(key)
        out.append(_variant(caption, text, f"backtranslate:{pivot}", i))
    return out


def paraphrase(
    caption: CaptionRecord,
    n: int = 5,
    backend: TextBackend = IdentityBackend(),
) -> list[CaptionRecord]:
    if n < 1:
        raise ValueError("n must be >= 1")
    try:
        candidates = backend.paraphrase(caption.text, n)
    except Exception as exc:
        log.warning("paraphrase backend failed: %s", exc)
        return []
    seen = {normalized_key(caption.text)}
    out: list[CaptionRecord] = []
    for i, text in enumerate(candidates[:n]):
        key = normalized_key(text)
        if not text or key in seen:
            continue
        seen.add(key)
        out.append(_variant(caption, text, "paraphrase", i))
    return out


@dataclass
class AugmentConfig:
    synonym_rate: float = 0.1
    n_synonym: int = 3
    pivots: tuple[str, ...] = ("ar", "es")
    n_paraphrase: int = 5
    lexicon: SynonymLexicon = field(default_factory=lambda: DEFAULT_LEXICON)
    backend: TextBackend = field(default_factory=IdentityBackend)
    seed: int = 0


@dataclass
class AugmentationSet:
    source: CaptionRecord
    variants: list[CaptionRecord]


def augment_caption(caption: CaptionRecord, config: AugmentConfig | None = None) -> AugmentationSet:
    """Union of all three methods, globally deduplicated by normalized text.

    Order is synonym, back-translation, paraphrase, stable within each method.
    With the default fan-out caps (3 + 2 + 5) this yields at most 10 variants.
    """
    if not caption.tokens:
        raise ValueError("caption must be non-empty")
    config = config or AugmentConfig()
    candidates = (
        synonym_substitute(caption, config.synonym_rate, config.n_synonym, config.lexicon, config.seed)
        + back_translate(caption, list(config.pivots), config.backend)
        + paraphrase(caption, config.n_paraphrase, config.backend)
    )
    seen = {normalized_key(caption.text)}
    variants: list[CaptionRecord] = []
    for cand in candidates:
        key = normalized_key(cand.text)
        if key in seen:
            continue
        seen.add(key)
        variants.append(cand)
    return AugmentationSet(source=caption, variants=variants)
