"""Pre-embedding of the normalized database and sharded exact cosine top-k.

The corpus is embedded once and partitioned into nine shards keyed by the
first digit of each address's CP4. Retrieval is an exact scan (no
approximation); the speedup at query time comes from restricting the scan to
the query's shard.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .embedding import DIM, ProjectionWeights, ZeroVector, embed, weights_fingerprint
from .model import NormalizedAddress, render_normalized

__all__ = [
    "Candidate",
    "ShardedIndex",
    "DuplicateId",
    "InvalidCp4Prefix",
    "CorruptStore",
    "DimensionMismatch",
    "precompute_store",
    "top_k",
    "save_store",
    "load_store",
]

SHARD_DIGITS = range(1, 10)


class DuplicateId(ValueError):
    pass


class InvalidCp4Prefix(ValueError):
    pass


class CorruptStore(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Candidate:
    id: str
    similarity: float
    rank: int


@dataclass
class _Shard:
    ids: list[str]
    vectors: np.ndarray  # (n, DIM) float32
    norms: np.ndarray    # (n,) float64

    @classmethod
    def build(cls, ids: list[str], vectors: np.ndarray) -> "_Shard":
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        return cls(ids, vectors, norms)


@dataclass
class ShardedIndex:
    shards: dict[int, _Shard]
    id_to_address: dict[str, NormalizedAddress]
    fingerprint: int
    fingerprint_mismatch: bool = False

    @property
    def size(self) -> int:
        return sum(len(s.ids) for s in self.shards.values())

    def shard_sizes(self) -> dict[int, int]:
        return {d: len(s.ids) for d, s in self.shards.items()}


def precompute_store(corpus: Sequence[NormalizedAddress],
                     w: ProjectionWeights) -> ShardedIndex:
    """Embed every address and place it in the shard of its CP4 first digit."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    seen: dict[str, NormalizedAddress] = {}
    by_digit: dict[int, tuple[list[str], list[np.ndarray]]] = {
        d: ([], []) for d in SHARD_DIGITS}
    for addr in corpus:
        if addr.id in seen:
            raise DuplicateId(addr.id)
        seen[addr.id] = addr
        digit = addr.zip.first_digit
        if digit not in by_digit:
            raise InvalidCp4Prefix(f"{addr.id}: cp4 {addr.zip.cp4}")
        ids, vecs = by_digit[digit]
        ids.append(addr.id)
        vecs.append(embed(render_normalized(addr), w))
    shards = {}
    for d, (ids, vecs) in by_digit.items():
        mat = (np.vstack(vecs).astype(np.float32) if vecs
               else np.empty((0, DIM), dtype=np.float32))
        shards[d] = _Shard.build(ids, mat)
    return ShardedIndex(shards, seen, weights_fingerprint(w))


def _scan(shard: _Shard, query: np.ndarray, qnorm: float) -> np.ndarray:
    if not shard.ids:
        return np.empty(0)
    sims = shard.vectors.astype(np.float64, copy=False) @ query
    # entries with zero norm can never match; pin them to the bottom
    safe = np.where(shard.norms > 1e-12, shard.norms, 1.0)
    sims = np.where(shard.norms > 1e-12, sims / (safe * qnorm), -1.0)
    return sims


def top_k(index: ShardedIndex, query: np.ndarray,
          shard: Optional[int] = None, k: int = 10) -> list[Candidate]:
    """Exact cosine top-k over one shard or all of them. Ties broken by
    ascending address id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if query.shape != (DIM,):
        raise DimensionMismatch(f"query must be {DIM}-dim")
    qnorm = float(np.linalg.norm(query))
    if qnorm < 1e-12:
        raise ZeroVector("zero query vector")
    digits = [shard] if shard is not None else list(SHARD_DIGITS)
    all_ids: list[str] = []
    sims_parts = []
    for d in digits:
        sh = index.shards[d]
        if not sh.ids:
            continue
        all_ids.extend(sh.ids)
        sims_parts.append(_scan(sh, query, qnorm))
    if not all_ids:
        return []
    sims = np.concatenate(sims_parts)
    n = sims.size
    if n > k:
        part = np.argpartition(sims, n - k)[n - k:]
        thresh = sims[part].min()
        pool = np.flatnonzero(sims >= thresh)
    else:
        pool = np.arange(n)
    ranked = sorted(pool, key=lambda i: (-sims[i], all_ids[i]))[:k]
    return [Candidate(all_ids[i], float(sims[i]), r + 1)
            for r, i in enumerate(ranked)]


_MAGIC = b"ABES"
_VERSION = 1


def save_store(index: ShardedIndex, path=None) -> bytes:
    """Serialize the store. Little-endian: magic "ABES", version u32, dim u32,
    weights fingerprint u64, shard count u8, then per shard entry count u64
    followed by (id length u16, id UTF-8 bytes, DIM float32) entries."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IIQB", _VERSION, DIM, index.fingerprint,
                          len(SHARD_DIGITS)))
    for d in SHARD_DIGITS:
        sh = index.shards[d]
        buf.write(struct.pack("<Q", len(sh.ids)))
        for i, addr_id in enumerate(sh.ids):
            raw = addr_id.encode("utf-8")
            buf.write(struct.pack("<H", len(raw)))
            buf.write(raw)
            buf.write(np.ascontiguousarray(sh.vectors[i], dtype="<f4").tobytes())
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_store(data, corpus: Optional[Sequence[NormalizedAddress]] = None,
               expected_fingerprint: Optional[int] = None) -> ShardedIndex:
    """Load a store from bytes or a file path. When ``expected_fingerprint``
    is given and differs, the index is returned with fingerprint_mismatch set
    (a warning flag, not an error)."""
    if not isinstance(data, (bytes, bytearray)):
        with open(data, "rb") as fh:
            data = fh.read()
    buf = io.BytesIO(data)

    def need(n: int) -> bytes:
        chunk = buf.read(n)
        if len(chunk) != n:
            raise CorruptStore("truncated store file")
        return chunk

    if need(4) != _MAGIC:
        raise CorruptStore("bad magic")
    version, dim, fingerprint, n_shards = struct.unpack("<IIQB", need(17))
    if version != _VERSION:
        raise CorruptStore(f"unsupported version {version}")
    if dim != DIM:
        raise DimensionMismatch(f"store dim {dim}, expected {DIM}")
    if n_shards != len(SHARD_DIGITS):
        raise CorruptStore(f"expected 9 shards, got {n_shards}")
    shards = {}
    for d in SHARD_DIGITS:
        (count,) = struct.unpack("<Q", need(8))
        ids = []
        vecs = np.empty((count, DIM), dtype=np.float32)
        for i in range(count):
            (id_len,) = struct.unpack("<H", need(2))
            ids.append(need(id_len).decode("utf-8"))
            vecs[i] = np.frombuffer(need(DIM * 4), dtype="<f4")
        shards[d] = _Shard.build(ids, vecs)
    id_to_address = {a.id: a for a in corpus} if corpus else {}
    mismatch = (expected_fingerprint is not None
                and expected_fingerprint != fingerprint)
    return ShardedIndex(shards, id_to_address, fingerprint,
                        fingerprint_mismatch=mismatch)
