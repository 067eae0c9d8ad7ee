"""Model bundles behind the sidecar protocol.

``DeterministicBundle`` is a dependency-free stand-in: a hashed character
n-gram featurizer projected to 512 dims with tanh, and a pair scorer that
squashes the embedding cosine through a logistic. It is fully deterministic,
which is what the shipped golden fixtures rely on.

``TransformerBundle`` wraps a pre-trained multilingual sentence encoder
(mean pooling, linear projection to 512, tanh) when ``sentence-transformers``
is installed; scoring uses the same cosine-logistic head over the transformer
embeddings.
"""
from __future__ import annotations

import zlib
from typing import Protocol, Sequence

import numpy as np

DIM = 512
DEFAULT_F = 4096


class ModelBundle(Protocol):
    max_batch: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...
    def score(self, pairs: Sequence[tuple[str, str]]) -> list[float]: ...


def _featurize(text: str, size: int) -> np.ndarray:
    vec = np.zeros(size)
    for tok in text.lower().split():
        marked = f"^{tok}$"
        grams = [f"w:{tok}"]
        for n in (2, 3, 4):
            grams.extend(marked[i:i + n] for i in range(len(marked) - n + 1))
        for g in grams:
            vec[zlib.crc32(g.encode("utf-8")) % size] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class DeterministicBundle:
    """Download-free bundle; deterministic under ``seed``."""

    def __init__(self, seed: int = 0, feature_size: int = DEFAULT_F,
                 max_batch: int = 256, scale: float = 8.0):
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(feature_size)
        self._matrix = rng.uniform(-bound, bound, (feature_size, DIM))
        self._size = feature_size
        self._scale = scale
        self.max_batch = max_batch

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), DIM))
        for i, t in enumerate(texts):
            out[i] = np.tanh(_featurize(t, self._size) @ self._matrix)
        return out

    def score(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        a = self.embed([p[0] for p in pairs])
        b = self.embed([p[1] for p in pairs])
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        denom = np.where((na > 1e-12) & (nb > 1e-12), na * nb, 1.0)
        cos = np.where((na > 1e-12) & (nb > 1e-12),
                       np.sum(a * b, axis=1) / denom, 0.0)
        # logistic over the cosine, centred so unrelated strings score low
        probs = 1.0 / (1.0 + np.exp(-self._scale * (cos - 0.5)))
        return [float(min(max(p, 0.0), 1.0)) for p in probs]


class TransformerBundle:
    """Pre-trained multilingual encoder behind the same interface.

    Requires the ``transformer`` extra. The encoder output is mean-pooled by
    the underlying library, projected to 512 dims with a fixed seeded linear
    map, and tanh-activated so it satisfies the protocol shape exactly.
    """

    def __init__(self, model_name: str = "distilbert-base-multilingual-cased",
                 seed: int = 0, max_batch: int = 64, scale: float = 8.0):
        from sentence_transformers import SentenceTransformer

        self._encoder = SentenceTransformer(model_name)
        width = self._encoder.get_sentence_embedding_dimension()
        rng = np.random.default_rng(seed)
        self._proj = rng.uniform(-1.0 / np.sqrt(width), 1.0 / np.sqrt(width),
                                 (width, DIM))
        self._scale = scale
        self.max_batch = max_batch

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.empty((0, DIM))
        raw = np.asarray(self._encoder.encode(list(texts),
                                              convert_to_numpy=True))
        return np.tanh(raw @ self._proj)

    def score(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        a = self.embed([p[0] for p in pairs])
        b = self.embed([p[1] for p in pairs])
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        denom = np.where((na > 1e-12) & (nb > 1e-12), na * nb, 1.0)
        cos = np.sum(a * b, axis=1) / denom
        probs = 1.0 / (1.0 + np.exp(-self._scale * (cos - 0.5)))
        return [float(min(max(p, 0.0), 1.0)) for p in probs]


def load_bundle(kind: str = "deterministic", **kwargs) -> ModelBundle:
    if kind == "deterministic":
        return DeterministicBundle(**kwargs)
    if kind == "transformer":
        return TransformerBundle(**kwargs)
    raise ValueError(f"unknown bundle kind {kind!r}")
