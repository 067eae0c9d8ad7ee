"""Address matching via embedding retrieval over CP4 shards plus reranking.

Subpackages and modules:

- model: address data types, ZIP parsing, text normalization
- metrics: Levenshtein / ratio / token sort / token set baselines
- lexical: BM25 retrieval baseline
- embedding: hashed-feature bi-encoder head, contrastive training
- store: sharded exact cosine top-k with binary persistence
- reranker: pair-feature logistic reranker (cross-encoder surrogate)
- pipeline: retrieve-and-rerank matching with confidence cutoffs
- datagen: synthetic corpus, noise model, training pair construction
- evalharness: accuracy/recall metrics, sweeps, histograms, benchmarks
- service: HTTP API, review queue, sidecar client
- _kernels: compiled edit-distance core with pure-Python fallback
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
