"""Caption quality metrics.

BLEU is implemented directly (rather than via nltk) so the smoothing variant
is pinned: for n >= 2, an n-gram precision with a raw match count of zero gets
1 added to both numerator and denominator. A zero unigram precision still
yields BLEU 0. Golden values in the tests depend on this exact rule.
"""
from __future__ import annotations

import math
from collections import Counter


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(hypothesis, references, n: int) -> tuple[int, int]:
    hyp_counts = _ngrams(hypothesis, n)
    total = sum(hyp_counts.values())
    if not hyp_counts:
        return 0, 0
    max_ref = Counter()
    for ref in references:
        for g, c in _ngrams(ref, n).items():
            if c > max_ref[g]:
                max_ref[g] = c
    matched = sum(min(c, max_ref[g]) for g, c in hyp_counts.items())
    return matched, total


def _closest_ref_len(hyp_len: int, references) -> int:
    return min((abs(len(r) - hyp_len), len(r)) for r in references)[1]


def _combine(matches, totals, hyp_len, ref_len, max_n: int) -> float:
    log_sum = 0.0
    for n in range(1, max_n + 1):
        m, t = matches[n - 1], totals[n - 1]
        if n >= 2 and m == 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / max(hyp_len, 1))
    return bp * math.exp(log_sum / max_n)


def bleu(hypothesis, references, max_n: int = 4) -> float:
    """Sentence BLEU with brevity penalty and add-one smoothing for n >= 2."""
    if not references:
        raise ValueError("references must be non-empty")
    if not hypothesis:
        return 0.0
    matches, totals = [], []
    for n in range(1, max_n + 1):
        m, t = _clipped_matches(hypothesis, references, n)
        matches.append(m)
        totals.append(t)
    ref_len = _closest_ref_len(len(hypothesis), references)
    return _combine(matches, totals, len(hypothesis), ref_len, max_n)


def corpus_bleu(hypotheses, reference_lists, max_n: int = 4) -> float:
    """Corpus BLEU: n-gram counts pooled over sentences, then combined once."""
    if len(hypotheses) != len(reference_lists):
        raise ValueError("hypotheses and reference lists must align")
    if not hypotheses:
        return 0.0
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hypotheses, reference_lists):
        if not refs:
            raise ValueError("references must be non-empty")
        if not hyp:
            ref_len += min(len(r) for r in refs)
            continue
        for n in range(1, max_n + 1):
            m, t = _clipped_matches(hyp, refs, n)
            matches[n - 1] += m
            totals[n - 1] += t
        hyp_len += len(hyp)
        ref_len += _closest_ref_len(len(hyp), refs)
    if hyp_len == 0:
        return 0.0
    return _combine(matches, totals, hyp_len, ref_len, max_n)


def evaluate(model, eval_set, max_len: int = 20) -> dict:
    """Greedy-generate a caption per image and score corpus BLEU-4.

    `eval_set` is a list of (ImageRecord, list-of-reference-token-lists).
    """
    if not eval_set:
        raise ValueError("eval_set must be non-empty")
    hyps, refs = [], []
    for image, references in eval_set:
        caption, _trace = model.generate(image, mode="greedy", max_len=max_len)
        hyps.append(list(caption.tokens))
        refs.append([list(r) for r in references])
    return {
        "bleu4": corpus_bleu(hyps, refs, max_n=4),
        "avg_len": sum(len(h) for h in hyps) / len(hyps),
        "n": len(eval_set),
    }
