"""Retrieve-and-rerank orchestration: embed the query, search its CP4 shard,
rerank the top-k, and accept or route to review by a confidence cutoff.

Two modes: "bice" (retrieval + reranker, cutoff 0.90 by default) and "bi"
(retrieval only, confidence is the clamped top-1 cosine, cutoff 0.99)."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from . import lexical
from .embedding import ProjectionWeights, ZeroVector, embed
from .model import (MalformedZip, NormalizedAddress, UnnormalizedAddress,
                    normalize_text, parse_zip)
from .reranker import (RerankerWeights, RetrievalContext, ScoredCandidate,
                       rerank)
from .store import ShardedIndex, top_k

__all__ = [
    "Mode",
    "ShardFallback",
    "PipelineConfig",
    "DecisionCandidate",
    "MatchDecision",
    "MatchFailure",
    "Matcher",
    "EmptyIndex",
    "NoCandidates",
    "decision_to_dict",
]


class Mode(str, Enum):
    BI_ONLY = "bi"
    BI_CE = "bice"


class ShardFallback(str, Enum):
    ALL_SHARDS = "all_shards"
    REJECT = "reject"


class EmptyIndex(ValueError):
    pass


class NoCandidates(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    top_k: int = 10
    cutoff_bice: float = 0.90
    cutoff_bi_only: float = 0.99
    mode: Mode = Mode.BI_CE
    shard_fallback: ShardFallback = ShardFallback.ALL_SHARDS

    def __post_init__(self) -> None:
        if not (0.0 <= self.cutoff_bice <= 1.0 and 0.0 <= self.cutoff_bi_only <= 1.0):
            raise ValueError("cutoffs must lie in [0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    @property
    def active_cutoff(self) -> float:
        return self.cutoff_bice if self.mode is Mode.BI_CE else self.cutoff_bi_only


@dataclass(frozen=True)
class DecisionCandidate:
    id: str
    similarity: float
    probability: float
    rank: int


@dataclass(frozen=True)
class MatchDecision:
    query: UnnormalizedAddress
    best: DecisionCandidate
    outcome: str                       # "accepted" | "for_review"
    candidates: tuple[DecisionCandidate, ...]
    shard_used: Optional[int]          # None means all shards
    timings_us: dict[str, int] = field(default_factory=dict)

    @property
    def confidence(self) -> float:
        return self.best.probability

    @property
    def accepted(self) -> bool:
        return self.outcome == "accepted"


@dataclass(frozen=True)
class MatchFailure:
    query: UnnormalizedAddress
    error: str


class Matcher:
    """Immutable bundle of index + weights + config; safe for concurrent use.

    Builds the BM25 index over the same corpus once (reranker features need
    per-candidate BM25 scores).
    """

    def __init__(self, index: ShardedIndex, bi: ProjectionWeights,
                 rr: Optional[RerankerWeights],
                 cfg: PipelineConfig = PipelineConfig()):
        if index.size == 0:
            raise EmptyIndex("index has no entries")
        if cfg.mode is Mode.BI_CE and rr is None:
            raise ValueError("bice mode needs reranker weights")
        self.index = index
        self.bi = bi
        self.rr = rr
        self.cfg = cfg
        self.lexical = lexical.build_lexical_index(
            list(index.id_to_address.values())) if index.id_to_address else None

    def _select_shard(self, raw: str) -> Optional[int]:
        try:
            return parse_zip(raw).first_digit
        except (MalformedZip, ValueError):
            return None

    def match(self, query: UnnormalizedAddress,
              mode: Optional[Mode] = None,
              force_all_shards: bool = False) -> MatchDecision:
        cfg = self.cfg
        mode = mode or cfg.mode
        t0 = time.perf_counter()
        qvec = embed(query.raw, self.bi)
        t1 = time.perf_counter()

        shard = None if force_all_shards else self._select_shard(query.raw)
        if shard is not None and not self.index.shards[shard].ids:
            shard = None if cfg.shard_fallback is ShardFallback.ALL_SHARDS else shard
        try:
            cands = top_k(self.index, qvec, shard=shard, k=cfg.top_k)
        except ZeroVector:
            raise NoCandidates(f"query produced a zero embedding: {query.raw!r}")
        if not cands:
            if cfg.shard_fallback is ShardFallback.ALL_SHARDS and shard is not None:
                cands = top_k(self.index, qvec, shard=None, k=cfg.top_k)
                shard = None
            if not cands:
                raise NoCandidates("selected shard is empty")
        t2 = time.perf_counter()

        sims = {c.id: c.similarity for c in cands}
        if mode is Mode.BI_CE:
            ctx = self._context(query, cands, sims)
            scored = rerank(query, cands, self.index.id_to_address, self.rr, ctx)
            decided = tuple(DecisionCandidate(s.id, sims[s.id], s.probability, s.rank)
                            for s in scored)
            cutoff = cfg.cutoff_bice
        else:
            decided = tuple(
                DecisionCandidate(c.id, c.similarity,
                                  max(0.0, min(1.0, c.similarity)), c.rank)
                for c in cands)
            cutoff = cfg.cutoff_bi_only
        t3 = time.perf_counter()

        best = decided[0]
        outcome = "accepted" if best.probability >= cutoff else "for_review"
        return MatchDecision(
            query=query, best=best, outcome=outcome, candidates=decided,
            shard_used=shard,
            timings_us={
                "embed": int((t1 - t0) * 1e6),
                "retrieve": int((t2 - t1) * 1e6),
                "rerank": int((t3 - t2) * 1e6),
            },
        )

    def _context(self, query, cands, sims) -> RetrievalContext:
        bm25_scores = {}
        if self.lexical is not None:
            qtokens = normalize_text(query.raw)
            for c in cands:
                bm25_scores[c.id] = lexical.bm25_score(self.lexical, qtokens, c.id)
        try:
            query_cp4 = parse_zip(query.raw).cp4
        except (MalformedZip, ValueError):
            query_cp4 = None
        return RetrievalContext(
            similarities=sims, bm25_scores=bm25_scores, query_cp4=query_cp4,
            query_tokens=frozenset(normalize_text(query.raw)))

    def match_batch(self, queries: Sequence[UnnormalizedAddress],
                    mode: Optional[Mode] = None,
                    force_all_shards: bool = False):
        """Element-wise equal to sequential match calls; order preserved.
        Per-item failures are carried in the result list, never raised."""
        out = []
        for q in queries:
            try:
                out.append(self.match(q, mode=mode, force_all_shards=force_all_shards))
            except Exception as exc:  # noqa: BLE001 - contract: batch never aborts
                out.append(MatchFailure(q, f"{type(exc).__name__}: {exc}"))
        return out


def decision_to_dict(d: MatchDecision, include_timings: bool = True) -> dict:
    rec = {
        "query": d.query.raw,
        "gold_id": d.query.gold_id,
        "best_id": d.best.id,
        "confidence": d.best.probability,
        "outcome": d.outcome,
        "shard": d.shard_used,
        "candidates": [
            {"id": c.id, "similarity": c.similarity,
             "probability": c.probability, "rank": c.rank}
            for c in d.candidates
        ],
    }
    if include_timings:
        rec["timings_us"] = d.timings_us
    return rec


def dict_to_decision(rec: dict) -> MatchDecision:
    cands = tuple(DecisionCandidate(c["id"], c["similarity"], c["probability"],
                                    c["rank"]) for c in rec["candidates"])
    return MatchDecision(
        query=UnnormalizedAddress(rec["query"], rec.get("gold_id")),
        best=cands[0], outcome=rec["outcome"], candidates=cands,
        shard_used=rec.get("shard"), timings_us=rec.get("timings_us", {}))


def dump_decisions(decisions, path, include_timings: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in decisions:
            if isinstance(d, MatchDecision):
                fh.write(json.dumps(decision_to_dict(d, include_timings),
                                    ensure_ascii=False) + "\n")


def load_decisions(path) -> list[MatchDecision]:
    with open(path, encoding="utf-8") as fh:
        return [dict_to_decision(json.loads(line)) for line in fh if line.strip()]
