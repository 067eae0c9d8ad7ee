"""HTTP service: matching endpoint, manual-review queue, corpus ingestion and
the sidecar client for remote transformer models.

The review queue is persisted as an append-only line-delimited JSON event log
replayed at startup. The index is swapped atomically on ingest: in-flight
matches finish on the old snapshot.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import httpx
import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse, PlainTextResponse

from .embedding import DIM, ProjectionWeights
from .model import (NormalizedAddress, UnnormalizedAddress, ZipCode,
                    render_normalized)
from .pipeline import (Matcher, MatchDecision, Mode, PipelineConfig,
                       decision_to_dict)
from .reranker import RerankerWeights
from .store import precompute_store

__all__ = [
    "ReviewStatus",
    "ReviewItem",
    "ReviewStore",
    "SidecarConfig",
    "SidecarClient",
    "SidecarUnreachable",
    "SidecarBadResponse",
    "AppState",
    "create_app",
]


class ReviewStatus(str, Enum):
    PENDING = "pending"
    RESOLVED = "resolved"
    UNDELIVERABLE = "undeliverable"


@dataclass
class ReviewItem:
    item_id: str
    decision: dict               # serialized MatchDecision
    status: ReviewStatus
    created_at: float
    resolution: Optional[str] = None
    resolver: Optional[str] = None
    resolved_at: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "decision": self.decision,
            "status": self.status.value,
            "created_at": self.created_at,
            "resolution": self.resolution,
            "resolver": self.resolver,
            "resolved_at": self.resolved_at,
        }


class AlreadyResolved(ValueError):
    pass


class UnknownItem(KeyError):
    pass


class ReviewStore:
    """Durable review queue backed by an append-only event log.

    Events: {"event": "enqueue", ...} and {"event": "resolve", ...}. Replay at
    construction restores all item states; resolution is compare-and-set under
    a lock.
    """

    def __init__(self, log_path):
        self._path = log_path
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {}
        self._order: list[str] = []
        self._replay()

    def _replay(self) -> None:
        try:
            fh = open(self._path, encoding="utf-8")
        except FileNotFoundError:
            return
        with fh:
            for line in fh:
                if not line.strip():
                    continue
                ev = json.loads(line)
                if ev["event"] == "enqueue":
                    item = ReviewItem(ev["item_id"], ev["decision"],
                                      ReviewStatus.PENDING, ev["created_at"])
                    self._items[item.item_id] = item
                    self._order.append(item.item_id)
                elif ev["event"] == "resolve":
                    item = self._items[ev["item_id"]]
                    item.status = ReviewStatus(ev["status"])
                    item.resolution = ev.get("resolution")
                    item.resolver = ev.get("resolver")
                    item.resolved_at = ev.get("resolved_at")

    def _append(self, event: dict) -> None:
        with open(self._path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")
            fh.flush()

    def enqueue(self, decision: dict) -> ReviewItem:
        with self._lock:
            item = ReviewItem(uuid.uuid4().hex, decision,
                              ReviewStatus.PENDING, time.time())
            self._items[item.item_id] = item
            self._order.append(item.item_id)
            self._append({"event": "enqueue", "item_id": item.item_id,
                          "decision": decision, "created_at": item.created_at})
            return item

    def resolve(self, item_id: str, chosen_id: Optional[str],
                undeliverable: bool, resolver: Optional[str] = None) -> ReviewItem:
        with self._lock:
            if item_id not in self._items:
                raise UnknownItem(item_id)
            item = self._items[item_id]
            if item.status is not ReviewStatus.PENDING:
                raise AlreadyResolved(item_id)
            item.status = (ReviewStatus.UNDELIVERABLE if undeliverable
                           else ReviewStatus.RESOLVED)
            item.resolution = chosen_id
            item.resolver = resolver
            item.resolved_at = time.time()
            self._append({"event": "resolve", "item_id": item_id,
                          "status": item.status.value, "resolution": chosen_id,
                          "resolver": resolver, "resolved_at": item.resolved_at})
            return item

    def list_items(self, status: Optional[ReviewStatus] = None,
                   limit: Optional[int] = None) -> list[ReviewItem]:
        with self._lock:
            items = [self._items[i] for i in reversed(self._order)
                     if status is None or self._items[i].status is status]
        return items[:limit] if limit else items

    def get(self, item_id: str) -> ReviewItem:
        with self._lock:
            if item_id not in self._items:
                raise UnknownItem(item_id)
            return self._items[item_id]


class SidecarUnreachable(RuntimeError):
    pass


class SidecarBadResponse(ValueError):
    pass


class SidecarRole(str, Enum):
    EMBEDDER = "embedder"
    SCORER = "scorer"
    BOTH = "both"


@dataclass(frozen=True)
class SidecarConfig:
    base_url: str = ""
    timeout: float = 5.0
    enabled: bool = False
    role: SidecarRole = SidecarRole.BOTH
    fallback_builtin: bool = True

    def __post_init__(self) -> None:
        if self.enabled and not self.base_url:
            raise ValueError("enabled sidecar requires a base_url")


class SidecarClient:
    """Client for the remote-model protocol:
    POST /embed {"texts": [...]} -> {"vectors": [[512 floats], ...]}
    POST /score {"pairs": [[a, b], ...]} -> {"probabilities": [...]}
    """

    def __init__(self, cfg: SidecarConfig, transport=None):
        self.cfg = cfg
        self._client = httpx.Client(base_url=cfg.base_url,
                                    timeout=cfg.timeout, transport=transport)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        data = self._post("/embed", {"texts": texts})
        vectors = data.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise SidecarBadResponse("vectors missing or wrong count")
        out = []
        for v in vectors:
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != (DIM,):
                raise SidecarBadResponse(f"expected {DIM}-dim vector, got {arr.shape}")
            out.append(arr)
        return out

    def score(self, pairs: list[tuple[str, str]]) -> list[float]:
        data = self._post("/score", {"pairs": [list(p) for p in pairs]})
        probs = data.get("probabilities")
        if not isinstance(probs, list) or len(probs) != len(pairs):
            raise SidecarBadResponse("probabilities missing or wrong count")
        out = []
        for p in probs:
            p = float(p)
            if not 0.0 <= p <= 1.0:
                raise SidecarBadResponse(f"probability out of range: {p}")
            out.append(p)
        return out

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise SidecarUnreachable(str(exc)) from exc
        if resp.status_code != 200:
            raise SidecarBadResponse(f"status {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise SidecarBadResponse("invalid JSON") from exc


@dataclass
class AppState:
    bi: ProjectionWeights
    rr: Optional[RerankerWeights]
    cfg: PipelineConfig
    review: ReviewStore
    feedback_path: str
    matcher: Optional[Matcher] = None
    sidecar: Optional[SidecarClient] = None
    decisions: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _record_to_address(rec: dict) -> NormalizedAddress:
    return NormalizedAddress(
        id=rec["id"], artery_type=rec["artery_type"],
        artery_name=rec["artery_name"], door_id=rec["door_id"],
        accommodation_id=rec.get("accommodation_id"),
        zip=ZipCode(int(rec["cp4"]), int(rec["cp3"]),
                    rec.get("designation", "")))


def _apply_sidecar_scores(state: AppState, decision: MatchDecision,
                          mode: Mode) -> tuple[dict, bool]:
    """Rescore the candidate list with the sidecar scorer; fall back to the
    built-in probabilities on failure."""
    rec = decision_to_dict(decision)
    client = state.sidecar
    if (client is None or not client.cfg.enabled or mode is Mode.BI_ONLY
            or client.cfg.role is SidecarRole.EMBEDDER):
        return rec, False
    addresses = state.matcher.index.id_to_address
    pairs = [(decision.query.raw, render_normalized(addresses[c.id]))
             for c in decision.candidates]
    try:
        probs = client.score(pairs)
    except (SidecarUnreachable, SidecarBadResponse):
        if client.cfg.fallback_builtin:
            rec["sidecar"] = "fallback"
            return rec, False
        raise
    order = sorted(range(len(pairs)), key=lambda i: (-probs[i], i))
    cands = []
    for rank, i in enumerate(order):
        c = dict(rec["candidates"][i])
        c["probability"] = probs[i]
        c["rank"] = rank + 1
        cands.append(c)
    rec["candidates"] = cands
    best = cands[0]
    rec["best_id"] = best["id"]
    rec["confidence"] = best["probability"]
    cutoff = (state.cfg.cutoff_bi_only if mode is Mode.BI_ONLY
              else state.cfg.cutoff_bice)
    rec["outcome"] = "accepted" if best["probability"] >= cutoff else "for_review"
    rec["sidecar"] = "scored"
    return rec, True


def create_app(state: AppState) -> FastAPI:
    app = FastAPI(title="addrmatch")
    app.state.addrmatch = state

    @app.post("/match")
    async def match(body: dict):
        raw = (body.get("raw") or "").strip()
        if not raw:
            return JSONResponse({"error": "raw must be non-empty"}, status_code=400)
        matcher = state.matcher
        if matcher is None:
            return JSONResponse({"error": "index not loaded"}, status_code=503)
        mode = Mode(body["mode"]) if body.get("mode") else None
        effective_mode = mode or matcher.cfg.mode
        decision = matcher.match(UnnormalizedAddress(raw), mode=mode)
        rec, _ = _apply_sidecar_scores(state, decision, effective_mode)
        rec["mode"] = effective_mode.value
        with state.lock:
            state.decisions.append(rec)
        if rec["outcome"] == "for_review":
            item = state.review.enqueue(rec)
            rec["review_item_id"] = item.item_id
        return rec

    @app.get("/review/queue")
    async def review_queue(status: str = "pending", limit: int = 50):
        try:
            st = ReviewStatus(status)
        except ValueError:
            return JSONResponse({"error": f"invalid status {status!r}"},
                                status_code=400)
        items = state.review.list_items(st, limit)
        return {"items": [i.to_dict() for i in items],
                "pending_count": len(state.review.list_items(ReviewStatus.PENDING))}

    @app.post("/review/{item_id}/resolve")
    async def resolve(item_id: str, body: dict):
        chosen_id = body.get("chosen_id")
        undeliverable = bool(body.get("undeliverable", False))
        if chosen_id is None and not undeliverable:
            return JSONResponse(
                {"error": "give chosen_id or undeliverable=true"}, status_code=400)
        try:
            item = state.review.resolve(item_id, chosen_id, undeliverable,
                                        body.get("resolver"))
        except UnknownItem:
            return JSONResponse({"error": "unknown item"}, status_code=404)
        except AlreadyResolved:
            return JSONResponse({"error": "already resolved"}, status_code=409)
        if item.status is ReviewStatus.RESOLVED and chosen_id:
            matcher = state.matcher
            addr = (matcher.index.id_to_address.get(chosen_id)
                    if matcher else None)
            norm_text = render_normalized(addr) if addr else chosen_id
            with open(state.feedback_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(
                    {"unnorm": item.decision["query"], "norm": norm_text,
                     "label": 1, "category": None}, ensure_ascii=False) + "\n")
        return item.to_dict()

    @app.post("/ingest")
    async def ingest(body: dict):
        records = body.get("records")
        if records is None and body.get("path"):
            with open(body["path"], encoding="utf-8") as fh:
                records = [json.loads(line) for line in fh if line.strip()]
        if not records:
            return JSONResponse({"error": "no records"}, status_code=422)
        corpus, errors = [], []
        for lineno, rec in enumerate(records, 1):
            try:
                addr = _record_to_address(rec)
                if not 1 <= addr.zip.first_digit <= 9:
                    raise ValueError("cp4 first digit must be 1-9")
                corpus.append(addr)
            except (KeyError, ValueError, TypeError) as exc:
                errors.append({"line": lineno, "error": str(exc)})
        if errors:
            return JSONResponse({"errors": errors}, status_code=422)
        index = precompute_store(corpus, state.bi)
        new_matcher = Matcher(index, state.bi, state.rr, state.cfg)
        state.matcher = new_matcher  # atomic swap; old snapshot stays valid
        return {"count": len(corpus), "index_fingerprint": index.fingerprint}

    @app.get("/metrics/confidence.csv")
    async def metrics_csv():
        from .evalharness import ConfidenceHistogram

        counts = [0] * 100
        with state.lock:
            recs = list(state.decisions)
        for rec in recs:
            i = min(int(rec["confidence"] * 100), 99)
            counts[i] += 1
        hist = ConfidenceHistogram(tuple(counts), len(recs))
        return PlainTextResponse(hist.to_csv(), media_type="text/csv")

    return app
