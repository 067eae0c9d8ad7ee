"""Bi-encoder at desk scale.

A deterministic hashed character-n-gram featurizer stands in for the
transformer body; the head is a trainable linear projection to 512 dims with
tanh activation, compared by cosine similarity and trained with the
contrastive loss

    L = 1/2 * [ y * D^2 + (1-y) * relu(margin - D)^2 ],   D = 1 - cosine.

A real transformer encoder can replace this module through the sidecar
protocol (see :mod:`addrmatch.service`).
"""
from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import normalize_text

__all__ = [
    "DIM",
    "DEFAULT_F",
    "SparseFeatures",
    "ProjectionWeights",
    "BiTrainerConfig",
    "ZeroVector",
    "DegenerateData",
    "featurize",
    "init_weights",
    "embed",
    "embed_batch",
    "cosine",
    "contrastive_loss",
    "contrastive_grad",
    "train_biencoder",
    "save_weights",
    "load_weights",
    "weights_fingerprint",
]

log = logging.getLogger(__name__)

DIM = 512
DEFAULT_F = 4096

_MASK64 = (1 << 64) - 1


class ZeroVector(ValueError):
    """Cosine of a (near-)zero vector is undefined."""


class DegenerateData(ValueError):
    """Training data contains only one label."""


@dataclass(frozen=True)
class SparseFeatures:
    """L2-normalized bag of hashed character n-grams."""
    indices: np.ndarray  # int64, sorted, unique
    counts: np.ndarray   # float64, positive
    size: int            # feature space size F


def featurize(text: str, size: int = DEFAULT_F) -> SparseFeatures:
    """Hash character 2/3/4-grams (with word-boundary markers) and whole-word
    unigrams of the normalized text into [0, size). Deterministic; the count
    vector is L2-normalized."""
    if size < 256:
        raise ValueError("feature space too small (need >= 256)")
    raw: dict[int, float] = {}
    for tok in normalize_text(text):
        marked = f"^{tok}$"
        grams = [f"w:{tok}"]
        for n in (2, 3, 4):
            grams.extend(marked[i:i + n] for i in range(len(marked) - n + 1))
        for g in grams:
            # crc32: fast, stable across runs and platforms
            idx = zlib.crc32(g.encode("utf-8")) % size
            raw[idx] = raw.get(idx, 0.0) + 1.0
    if not raw:
        return SparseFeatures(np.empty(0, dtype=np.int64),
                              np.empty(0, dtype=np.float64), size)
    indices = np.array(sorted(raw), dtype=np.int64)
    counts = np.array([raw[i] for i in indices], dtype=np.float64)
    counts /= np.linalg.norm(counts)
    return SparseFeatures(indices, counts, size)


@dataclass(frozen=True)
class ProjectionWeights:
    matrix: np.ndarray  # (F, 512) float64
    seed: int
    epoch_losses: tuple = field(default=(), compare=False)

    @property
    def feature_size(self) -> int:
        return int(self.matrix.shape[0])


def init_weights(size: int = DEFAULT_F, seed: int = 0) -> ProjectionWeights:
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(size)
    return ProjectionWeights(rng.uniform(-bound, bound, (size, DIM)), seed)


def embed(text: str, w: ProjectionWeights) -> np.ndarray:
    """512-dim embedding: tanh of the featurized text projected through w."""
    f = featurize(text, w.feature_size)
    pre = f.counts @ w.matrix[f.indices] if f.indices.size else np.zeros(DIM)
    return np.tanh(pre)


def embed_batch(texts: Sequence[str], w: ProjectionWeights) -> np.ndarray:
    out = np.empty((len(texts), DIM))
    for i, t in enumerate(texts):
        out[i] = embed(t, w)
    return out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise ZeroVector("cosine undefined for zero vector")
    return float(np.dot(a, b) / (na * nb))


def contrastive_loss(xa: np.ndarray, xb: np.ndarray, y: int, margin: float = 0.5) -> float:
    d = 1.0 - cosine(xa, xb)
    if y == 1:
        return 0.5 * d * d
    hinge = max(margin - d, 0.0)
    return 0.5 * hinge * hinge


def contrastive_grad(xa: np.ndarray, xb: np.ndarray, y: int,
                     margin: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the contrastive loss wrt both embeddings.

    At the hinge boundary (distance == margin, y=0) the subgradient 0 is used.
    """
    na = np.linalg.norm(xa)
    nb = np.linalg.norm(xb)
    if na < 1e-12 or nb < 1e-12:
        raise ZeroVector("cosine undefined for zero vector")
    c = float(np.dot(xa, xb) / (na * nb))
    d = 1.0 - c
    if y == 1:
        dl_dd = d
    else:
        dl_dd = -max(margin - d, 0.0)
    # dc/dxa = xb/(|a||b|) - c*xa/|a|^2 ; dD/dxa = -dc/dxa
    dc_da = xb / (na * nb) - c * xa / (na * na)
    dc_db = xa / (na * nb) - c * xb / (nb * nb)
    return -dl_dd * dc_da, -dl_dd * dc_db


@dataclass(frozen=True)
class BiTrainerConfig:
    margin: float = 0.5
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-2  # linear head; far larger than a transformer's
    weight_decay: float = 0.01
    warmup_steps: int = 100
    feature_size: int = DEFAULT_F
    seed: int = 0

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _lr_at(step: int, total: int, cfg: BiTrainerConfig) -> float:
    # linear warmup then linear decay to zero
    if step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    if total <= cfg.warmup_steps:
        return cfg.learning_rate
    frac = (total - step) / (total - cfg.warmup_steps)
    return cfg.learning_rate * max(frac, 0.0)


def train_biencoder(pairs: Sequence, cfg: BiTrainerConfig) -> ProjectionWeights:
    """Siamese training of the projection head with AdamW and a linear
    warmup/decay schedule. Deterministic under cfg.seed.

    ``pairs`` items need .unnorm_text, .norm_text and .label attributes.
    """
    if not pairs:
        raise DegenerateData("no training pairs")
    labels = {p.label for p in pairs}
    if labels != {0, 1}:
        raise DegenerateData(f"need both labels, got {sorted(labels)}")

    rng = np.random.default_rng(cfg.seed)
    w = init_weights(cfg.feature_size, cfg.seed).matrix.copy()
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    feats = [(featurize(p.unnorm_text, cfg.feature_size),
              featurize(p.norm_text, cfg.feature_size), p.label) for p in pairs]
    n_batches = (len(feats) + cfg.batch_size - 1) // cfg.batch_size
    total_steps = n_batches * cfg.epochs
    step = 0
    epoch_losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(feats))
        epoch_loss = 0.0
        for bi in range(n_batches):
            batch = order[bi * cfg.batch_size:(bi + 1) * cfg.batch_size]
            grad = np.zeros_like(w)
            batch_loss = 0.0
            for idx in batch:
                fa, fb, y = feats[idx]
                if fa.indices.size == 0 or fb.indices.size == 0:
                    continue
                ea = np.tanh(fa.counts @ w[fa.indices])
                eb = np.tanh(fb.counts @ w[fb.indices])
                try:
                    batch_loss += contrastive_loss(ea, eb, y, cfg.margin)
                    ga, gb = contrastive_grad(ea, eb, y, cfg.margin)
                except ZeroVector:
                    continue
                # backprop through tanh into the touched rows only
                np.add.at(grad, fa.indices,
                          np.outer(fa.counts, ga * (1.0 - ea * ea)))
                np.add.at(grad, fb.indices,
                          np.outer(fb.counts, gb * (1.0 - eb * eb)))
            grad /= max(len(batch), 1)
            step += 1
            lr = _lr_at(step - 1, total_steps, cfg)
            m = beta1 * m + (1 - beta1) * grad
            v = beta2 * v + (1 - beta2) * grad * grad
            mhat = m / (1 - beta1 ** step)
            vhat = v / (1 - beta2 ** step)
            w -= lr * (mhat / (np.sqrt(vhat) + eps) + cfg.weight_decay * w)
            epoch_loss += batch_loss / max(len(batch), 1)
        mean_loss = epoch_loss / n_batches
        epoch_losses.append(mean_loss)
        log.info("bi-encoder epoch %d/%d mean loss %.6f",
                 epoch + 1, cfg.epochs, mean_loss)
    return ProjectionWeights(w, cfg.seed, tuple(epoch_losses))


_MAGIC = b"ABMW"
_VERSION = 1


def save_weights(w: ProjectionWeights, path) -> None:
    """Binary format: magic "ABMW", version u32, F u32, dim u32, seed u64,
    then F*dim float32 row-major, all little-endian."""
    mat = np.ascontiguousarray(w.matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIQ", _VERSION, mat.shape[0], mat.shape[1],
                             w.seed & _MASK64))
        fh.write(mat.tobytes())


def load_weights(path) -> ProjectionWeights:
    with open(path, "rb") as fh:
        head = fh.read(4 + 4 * 3 + 8)
        if len(head) < 24 or head[:4] != _MAGIC:
            raise ValueError("not a projection-weights file")
        version, size, dim, seed = struct.unpack("<IIIQ", head[4:])
        if version != _VERSION:
            raise ValueError(f"unsupported weights version {version}")
        data = np.frombuffer(fh.read(), dtype="<f4")
        if data.size != size * dim:
            raise ValueError("truncated weights file")
        return ProjectionWeights(data.reshape(size, dim).astype(np.float64), seed)


def weights_fingerprint(w: ProjectionWeights) -> int:
    """64-bit fingerprint of the float32 serialization of the matrix."""
    import hashlib

    digest = hashlib.blake2b(
        np.ascontiguousarray(w.matrix, dtype="<f4").tobytes(),
        digest_size=8).digest()
    return int.from_bytes(digest, "little")
