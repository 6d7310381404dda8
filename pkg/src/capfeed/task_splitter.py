"""Concept-based task splitting.

Noun phrases are chunked from captions with a small deterministic tagger,
embedded by averaging pre-trained word vectors, clustered with k-means, and
each image is allocated to the split whose cluster holds the plurality of its
captions' noun phrases.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import CaptionRecord, ImageRecord

# --- tiny deterministic tagger -------------------------------------------

DETERMINERS = frozenset(
    "a an the this that these those some any each every no my your his her its our their".split()
)
ADJECTIVES = frozenset(
    "red green blue yellow brown orange purple pink black white gray grey "
    "small large big little tiny huge tall short long wide narrow old young new "
    "wooden metal plastic glass bright dark shiny dirty clean empty full round "
    "furry fluffy cute happy sad".split()
)
VERB_LEMMAS = frozenset(
    "run walk sit stand ride hold eat drink play jump look watch go come fly "
    "swim drive wear lie sleep talk stare point wave smile carry throw catch "
    "be is are was were has have do does".split()
)
_VERB_FORMS = set()
for _lemma in VERB_LEMMAS:
    _VERB_FORMS.update({_lemma, _lemma + "s", _lemma + "ing", _lemma + "ed"})
    if _lemma.endswith("e"):
        _VERB_FORMS.add(_lemma[:-1] + "ing")

# prepositions, conjunctions, pronouns: break noun-phrase chunks
CLOSED_CLASS = frozenset(
    "and or but nor on in at with near by under over above below of to for "
    "from as into onto off up down out about after before between behind "
    "he she it they we you i him them us there here not".split()
)

NOUNS = frozenset(
    "dog cat man woman child person people boy girl table chair bottle cup "
    "plate food street road car bus train bike house building tree grass sky "
    "water beach phone screen box bag book shirt hat ball circle square "
    "triangle star background shape picture photo image wall floor door "
    "window sign label container can package".split()
)


def tag_token(token: str) -> str:
    if token in DETERMINERS:
        return "DET"
    if token in CLOSED_CLASS:
        return "OTHER"
    if token in ADJECTIVES:
        return "ADJ"
    if token in _VERB_FORMS:
        return "VERB"
    if token in NOUNS:
        return "NOUN"
    if token.endswith("ly"):
        return "ADV"
    if len(token) > 4 and (token.endswith("ing") or token.endswith("ed")):
        return "VERB"
    # captioning text is noun-heavy; unknown words default to NOUN
    return "NOUN"


def extract_noun_phrases(caption: CaptionRecord) -> list[str]:
    """Chunks matching (ADJ)* (NOUN)+, determiners stripped, deduplicated."""
    tags = [tag_token(t) for t in caption.tokens]
    phrases: list[str] = []
    i = 0
    n = len(caption.tokens)
    while i < n:
        j = i
        while j < n and tags[j] == "ADJ":
            j += 1
        k = j
        while k < n and tags[k] == "NOUN":
            k += 1
        if k > j:  # at least one noun
            phrases.append(" ".join(caption.tokens[i:k]))
            i = k
        else:
            i = i + 1 if j == i else j
    seen: set[str] = set()
    out = []
    for p in phrases:
        if p not in seen:
            seen.add(p)
            out.append(p)
    return out


# --- embeddings -----------------------------------------------------------

class EmbeddingTable:
    """token -> vector map loaded from standard word-vector text format."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        dims = {v.shape for v in vectors.values()}
        if len(dims) > 1:
            raise ValueError(f"inconsistent embedding dimensions: {dims}")
        self.vectors = vectors
        self.dim = next(iter(dims))[0] if vectors else 0

    @classmethod
    def from_file(cls, path: str | Path) -> "EmbeddingTable":
        vectors: dict[str, np.ndarray] = {}
        with open(path) as f:
            for line in f:
                parts = line.rstrip("\n").split(" ")
                if len(parts) < 2:
                    continue
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        return cls(vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors


def embed_phrase(np_string: str, table: EmbeddingTable) -> tuple[np.ndarray, bool]:
    """Mean of in-table token vectors; (zero vector, True) when all tokens OOV."""
    if not np_string:
        raise ValueError("noun phrase must be non-empty")
    vecs = [table.vectors[t] for t in np_string.split() if t in table]
    if not vecs:
        return np.zeros(table.dim, dtype=np.float64), True
    return np.mean(vecs, axis=0), False


# --- k-means --------------------------------------------------------------

def _plus_plus_init(vectors: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = vectors.shape[0]
    centroids = np.empty((k, vectors.shape[1]))
    centroids[0] = vectors[rng.integers(n)]
    d2 = np.sum((vectors - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = vectors[rng.integers(n)]
        else:
            centroids[i] = vectors[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((vectors - centroids[i]) ** 2, axis=1))
    return centroids


def kmeans_with_history(
    vectors: np.ndarray, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-4
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds number of vectors n={n}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(vectors, k, rng)
    inertia_history: list[float] = []
    assignments = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignments = d2.argmin(axis=1)
        inertia_history.append(float(d2[np.arange(n), assignments].sum()))
        new_centroids = centroids.copy()
        for c in range(k):
            members = vectors[assignments == c]
            if len(members) == 0:
                # reseed an empty cluster to the farthest point
                farthest = int(d2.min(axis=1).argmax())
                new_centroids[c] = vectors[farthest]
            else:
                new_centroids[c] = members.mean(axis=0)
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if shift < tol:
            break
    d2 = ((vectors[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assignments = d2.argmin(axis=1)
    inertia_history.append(float(d2[np.arange(n), assignments].sum()))
    return assignments, centroids, inertia_history


def kmeans(
    vectors: np.ndarray, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-4
) -> tuple[np.ndarray, np.ndarray]:
    assignments, centroids, _ = kmeans_with_history(vectors, k, seed, max_iter, tol)
    return assignments, centroids


# --- split assignment -----------------------------------------------------

@dataclass
class TaskSplit:
    split_id: int
    image_ids: set[str] = field(default_factory=set)
    source_cluster: int = -1


def assign_splits(
    images: list[ImageRecord],
    captions: list[CaptionRecord],
    k: int,
    table: EmbeddingTable,
    seed: int = 0,
) -> list[TaskSplit]:
    """Partition images into k concept splits.

    Each image goes to the cluster holding the plurality of its captions'
    noun phrases; ties break toward the currently smallest split, then the
    lowest cluster id. Images with no noun phrases go to the smallest split.
    """
    caps_by_image: dict[str, list[CaptionRecord]] = {}
    for c in captions:
        caps_by_image.setdefault(c.image_id, []).append(c)

    all_nps: list[str] = []
    np_index: dict[str, int] = {}
    image_nps: dict[str, list[str]] = {}
    for img in images:
        nps: list[str] = []
        for cap in caps_by_image.get(img.image_id, []):
            nps.extend(extract_noun_phrases(cap))
        image_nps[img.image_id] = nps
        for p in nps:
            if p not in np_index:
                np_index[p] = len(all_nps)
                all_nps.append(p)

    splits = [TaskSplit(split_id=i, source_cluster=i) for i in range(k)]
    if not all_nps:
        for img in sorted(images, key=lambda i: i.image_id):
            smallest = min(splits, key=lambda s: (len(s.image_ids), s.split_id))
            smallest.image_ids.add(img.image_id)
        return splits

    vectors = np.stack([embed_phrase(p, table)[0] for p in all_nps])
    eff_k = min(k, len(all_nps))
    assignments, _ = kmeans(vectors, eff_k, seed=seed)

    for img in sorted(images, key=lambda i: i.image_id):
        votes = Counter(int(assignments[np_index[p]]) for p in image_nps[img.image_id])
        if not votes:
            target = min(splits, key=lambda s: (len(s.image_ids), s.split_id))
        else:
            top = max(votes.values())
            tied = [c for c, v in votes.items() if v == top]
            target = min(
                (splits[c] for c in tied),
                key=lambda s: (len(s.image_ids), s.split_id),
            )
        target.image_ids.add(img.image_id)
    return splits


def splits_to_dict(splits: list[TaskSplit]) -> dict:
    return {str(s.split_id): sorted(s.image_ids) for s in splits}


def splits_from_dict(d: dict) -> list[TaskSplit]:
    return [
        TaskSplit(split_id=int(sid), image_ids=set(ids), source_cluster=int(sid))
        for sid, ids in sorted(d.items(), key=lambda kv: int(kv[0]))
    ]
