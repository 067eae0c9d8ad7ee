import numpy as np
import pytest

from addrmatch import datagen, embedding, pipeline, reranker, store


@pytest.fixture(scope="session")
def small_corpus():
    cfg = datagen.CorpusConfig(n_addresses=600, seed=11)
    return datagen.generate_corpus(cfg)


@pytest.fixture(scope="session")
def trained_setup(small_corpus):
    """Small but fully trained pipeline shared across test modules."""
    corpus = small_corpus
    noise = datagen.NoiseConfig(seed=4)
    rng = np.random.default_rng(21)
    picks = rng.choice(len(corpus), size=450, replace=False)
    gold_train = [(datagen.derive_unnormalized(corpus[int(i)], noise), corpus[int(i)])
                  for i in picks[:300]]
    queries = [datagen.derive_unnormalized(corpus[int(i)], noise)
               for i in picks[300:]]
    pairs = datagen.build_biencoder_pairs(gold_train, corpus, seed=1)
    bi = embedding.train_biencoder(
        pairs, embedding.BiTrainerConfig(epochs=4, seed=2))
    index = store.precompute_store(corpus, bi)
    ce_pairs = datagen.build_crossencoder_pairs(gold_train, index, bi, seed=1)
    samples = reranker.build_feature_samples(ce_pairs, corpus, bi)
    rr = reranker.train_reranker(samples)
    matcher = pipeline.Matcher(index, bi, rr, pipeline.PipelineConfig())
    return {
        "corpus": corpus,
        "addresses": {a.id: a for a in corpus},
        "gold_train": gold_train,
        "queries": queries,
        "pairs": pairs,
        "ce_pairs": ce_pairs,
        "bi": bi,
        "rr": rr,
        "index": index,
        "matcher": matcher,
    }
