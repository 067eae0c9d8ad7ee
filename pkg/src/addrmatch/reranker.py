"""Cross-encoder stage at desk scale.

A logistic scorer over six interpretable pair features reranks the retrieved
candidates. It is trained with binary cross-entropy on 1:9 positive/negative
pairs; a real transformer cross-encoder can replace it through the sidecar
/score endpoint with the same in/out contract.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .embedding import DegenerateData
from .metrics import token_set_ratio, token_sort_ratio
from .model import (NormalizedAddress, UnnormalizedAddress, normalize_text,
                    render_normalized)
from .store import Candidate

__all__ = [
    "FEATURE_NAMES",
    "PairFeatures",
    "RerankerWeights",
    "RerankerConfig",
    "ScoredCandidate",
    "RetrievalContext",
    "extract_features",
    "score_pair",
    "train_reranker",
    "rerank",
    "save_reranker",
    "load_reranker",
]

log = logging.getLogger(__name__)

FEATURE_NAMES = ("cosine_sim", "token_set", "token_sort", "bm25_norm",
                 "cp4_digit_overlap", "door_exact")


@dataclass(frozen=True)
class PairFeatures:
    cosine_sim: float
    token_set: float
    token_sort: float
    bm25_norm: float
    cp4_digit_overlap: float
    door_exact: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cosine_sim, self.token_set, self.token_sort,
                         self.bm25_norm, self.cp4_digit_overlap,
                         self.door_exact])


@dataclass(frozen=True)
class RerankerWeights:
    coefficients: np.ndarray  # (6,)
    bias: float
    seed: int


@dataclass(frozen=True)
class RerankerConfig:
    epochs: int = 5000         # full-batch sweeps; the model has 7 parameters
    learning_rate: float = 2.0
    seed: int = 0


@dataclass(frozen=True)
class ScoredCandidate:
    id: str
    probability: float
    rank: int


@dataclass(frozen=True)
class RetrievalContext:
    """Per-query context needed for feature extraction: the retrieval
    similarities and BM25 scores of the candidate set."""
    similarities: dict[str, float]
    bm25_scores: dict[str, float]
    query_cp4: Optional[int]
    query_tokens: frozenset[str]

    @property
    def bm25_max(self) -> float:
        return max(self.bm25_scores.values(), default=0.0)


def extract_features(query: UnnormalizedAddress, cand: NormalizedAddress,
                     ctx: RetrievalContext) -> PairFeatures:
    rendered = render_normalized(cand)
    bm25_max = ctx.bm25_max
    bm25_norm = (ctx.bm25_scores.get(cand.id, 0.0) / bm25_max
                 if bm25_max > 0 else 0.0)
    if ctx.query_cp4 is None:
        overlap = 0.0
    else:
        qs, cs = f"{ctx.query_cp4:04d}", f"{cand.zip.cp4:04d}"
        shared = 0
        for qc, cc in zip(qs, cs):
            if qc != cc:
                break
            shared += 1
        overlap = shared / 4.0
    door_tokens = set(normalize_text(cand.door_id))
    door_exact = float(bool(door_tokens) and door_tokens <= ctx.query_tokens)
    return PairFeatures(
        cosine_sim=ctx.similarities.get(cand.id, 0.0),
        token_set=token_set_ratio(query.raw, rendered) / 100.0,
        token_sort=token_sort_ratio(query.raw, rendered) / 100.0,
        bm25_norm=bm25_norm,
        cp4_digit_overlap=overlap,
        door_exact=door_exact,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def score_pair(f: PairFeatures, w: RerankerWeights) -> float:
    z = float(np.dot(f.as_array(), w.coefficients) + w.bias)
    return float(_sigmoid(np.array(z)))


def cross_entropy_and_grad(x: np.ndarray, y: np.ndarray,
                           coef: np.ndarray, bias: float):
    """Mean binary cross-entropy and its analytic gradient."""
    z = x @ coef + bias
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps)))
    err = p - y
    return loss, x.T @ err / len(y), float(np.mean(err))


def train_reranker(samples: Sequence[tuple[PairFeatures, int]],
                   cfg: RerankerConfig = RerankerConfig()) -> RerankerWeights:
    """Full-batch gradient descent on mean cross-entropy. Deterministic under
    cfg.seed (which only sets the tiny random init)."""
    if not samples:
        raise DegenerateData("no training samples")
    y = np.array([lab for _, lab in samples], dtype=np.float64)
    if set(np.unique(y)) != {0.0, 1.0}:
        raise DegenerateData("need both labels present")
    x = np.vstack([f.as_array() for f, _ in samples])
    rng = np.random.default_rng(cfg.seed)
    coef = rng.normal(0.0, 0.01, x.shape[1])
    bias = 0.0
    first = last = None
    for i in range(cfg.epochs):
        loss, gcoef, gbias = cross_entropy_and_grad(x, y, coef, bias)
        if first is None:
            first = loss
        coef -= cfg.learning_rate * gcoef
        bias -= cfg.learning_rate * gbias
        last = loss
    log.info("reranker loss %.6f -> %.6f over %d sweeps", first, last, cfg.epochs)
    return RerankerWeights(coef, float(bias), cfg.seed)


def rerank(query: UnnormalizedAddress, candidates: Sequence[Candidate],
           addresses: dict[str, NormalizedAddress], w: RerankerWeights,
           ctx: RetrievalContext) -> list[ScoredCandidate]:
    """Reorder retrieved candidates by matching probability. Pure permutation:
    same id multiset in and out; ties broken by retrieval rank."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    scored = []
    for cand in candidates:
        feats = extract_features(query, addresses[cand.id], ctx)
        scored.append((score_pair(feats, w), cand))
    scored.sort(key=lambda t: (-t[0], t[1].rank))
    return [ScoredCandidate(c.id, p, r + 1)
            for r, (p, c) in enumerate(scored)]


def build_feature_samples(pairs, corpus: Sequence[NormalizedAddress],
                          bi) -> list[tuple[PairFeatures, int]]:
    """Turn (unnormalized, normalized, label) training pairs into feature
    samples. Pairs sharing the same unnormalized text form one candidate set,
    which defines the BM25 normalization and the retrieval similarities."""
    from . import lexical
    from .embedding import ZeroVector, embed
    from .model import MalformedZip, parse_zip

    by_render = {render_normalized(a): a for a in corpus}
    lex = lexical.build_lexical_index(corpus)
    groups: dict[str, list] = {}
    for p in pairs:
        groups.setdefault(p.unnorm_text, []).append(p)

    samples: list[tuple[PairFeatures, int]] = []
    for unnorm, group in groups.items():
        query = UnnormalizedAddress(unnorm)
        qtokens = normalize_text(unnorm)
        try:
            qvec = embed(unnorm, bi)
        except ZeroVector:
            continue
        cands = [by_render.get(p.norm_text) for p in group]
        sims: dict[str, float] = {}
        bm25: dict[str, float] = {}
        from .embedding import cosine

        for addr in cands:
            if addr is None:
                continue
            try:
                sims[addr.id] = cosine(qvec, embed(render_normalized(addr), bi))
            except ZeroVector:
                sims[addr.id] = 0.0
            bm25[addr.id] = lexical.bm25_score(lex, qtokens, addr.id)
        try:
            query_cp4 = parse_zip(unnorm).cp4
        except (MalformedZip, ValueError):
            query_cp4 = None
        ctx = RetrievalContext(similarities=sims, bm25_scores=bm25,
                               query_cp4=query_cp4,
                               query_tokens=frozenset(qtokens))
        for p, addr in zip(group, cands):
            if addr is None:
                continue
            samples.append((extract_features(query, addr, ctx), p.label))
    return samples


def save_reranker(w: RerankerWeights, path) -> None:
    """Single-line JSON with named coefficients, bias and seed."""
    rec = {name: float(v) for name, v in zip(FEATURE_NAMES, w.coefficients)}
    rec["bias"] = w.bias
    rec["seed"] = w.seed
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(rec) + "\n")


def load_reranker(path) -> RerankerWeights:
    with open(path, encoding="utf-8") as fh:
        rec = json.loads(fh.readline())
    coef = np.array([rec[name] for name in FEATURE_NAMES])
    return RerankerWeights(coef, float(rec["bias"]), int(rec["seed"]))
