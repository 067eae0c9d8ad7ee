"""Okapi BM25 retrieval baseline over the normalized corpus.

Documents are the canonical renderings of normalized addresses, tokenized by
``normalize_text``. Index is immutable after construction.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .model import NormalizedAddress, normalize_text, render_normalized

__all__ = ["LexicalIndex", "DuplicateId", "UnknownDoc", "build_lexical_index",
           "bm25_score", "top_k_lexical"]

K1 = 1.5
B = 0.75


class DuplicateId(ValueError):
    pass


class UnknownDoc(KeyError):
    pass


@dataclass(frozen=True)
class LexicalIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    doc_count: int
    avg_doc_length: float
    k1: float = K1
    b: float = B
    # per-doc term frequencies, kept for O(1) scoring
    _doc_tf: dict[str, Counter] = field(default_factory=dict, repr=False)

    def idf(self, token: str) -> float:
        n = len(self.postings.get(token, ()))
        return math.log((self.doc_count - n + 0.5) / (n + 0.5) + 1.0)


def build_lexical_index(corpus: Sequence[NormalizedAddress],
                        k1: float = K1, b: float = B) -> LexicalIndex:
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    doc_tf: dict[str, Counter] = {}
    for addr in corpus:
        if addr.id in doc_lengths:
            raise DuplicateId(addr.id)
        tokens = normalize_text(render_normalized(addr))
        tf = Counter(tokens)
        doc_lengths[addr.id] = len(tokens)
        doc_tf[addr.id] = tf
        for tok, f in tf.items():
            postings.setdefault(tok, []).append((addr.id, f))
    n = len(doc_lengths)
    avgdl = sum(doc_lengths.values()) / n if n else 0.0
    return LexicalIndex(postings=postings, doc_lengths=doc_lengths,
                        doc_count=n, avg_doc_length=avgdl, k1=k1, b=b,
                        _doc_tf=doc_tf)


def bm25_score(index: LexicalIndex, query: Sequence[str], doc_id: str) -> float:
    if doc_id not in index.doc_lengths:
        raise UnknownDoc(doc_id)
    tf = index._doc_tf[doc_id]
    dl = index.doc_lengths[doc_id]
    norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_length)
    score = 0.0
    for tok in query:
        f = tf.get(tok, 0)
        if f == 0:
            continue
        score += index.idf(tok) * f * (index.k1 + 1.0) / (f + norm)
    return score


def top_k_lexical(index: LexicalIndex, query: str, k: int) -> list[tuple[str, float]]:
    """Top-k documents for a raw query string, descending score, ties broken
    by ascending doc id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    tokens = normalize_text(query)
    # accumulate over postings so untouched docs score 0 without a full scan
    scores: dict[str, float] = {}
    for tok in set(tokens):
        mult = tokens.count(tok)
        for doc_id, f in index.postings.get(tok, ()):
            dl = index.doc_lengths[doc_id]
            norm = index.k1 * (1.0 - index.b + index.b * dl / index.avg_doc_length)
            contrib = index.idf(tok) * f * (index.k1 + 1.0) / (f + norm)
            scores[doc_id] = scores.get(doc_id, 0.0) + mult * contrib
    ranked = sorted(index.doc_lengths, key=lambda d: (-scores.get(d, 0.0), d))
    return [(d, scores.get(d, 0.0)) for d in ranked[:k]]
