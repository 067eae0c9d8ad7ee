import math
import random

import pytest

from addrmatch.lexical import (DuplicateId, UnknownDoc, build_lexical_index,
                               bm25_score, top_k_lexical)
from addrmatch.model import NormalizedAddress, ZipCode, normalize_text, render_normalized


def addr(i, atype, name, door, cp4, cp3=1, designation="Lisboa"):
    return NormalizedAddress(id=i, artery_type=atype, artery_name=name,
                             door_id=door, accommodation_id=None,
                             zip=ZipCode(cp4, cp3, designation))


TOY = [
    addr("d1", "Rua", "das Flores", "12", 1000),
    addr("d2", "Avenida", "da Liberdade", "7", 1250),
    addr("d3", "Rua", "do Carmo", "3", 1200),
]


def oracle_scores(corpus, query_tokens, k1=1.5, b=0.75):
    """Independent BM25 evaluation straight from the formula."""
    docs = {a.id: normalize_text(render_normalized(a)) for a in corpus}
    n = len(docs)
    avgdl = sum(len(d) for d in docs.values()) / n
    out = {}
    for doc_id, toks in docs.items():
        s = 0.0
        for t in query_tokens:
            f = toks.count(t)
            if f == 0:
                continue
            nt = sum(1 for d in docs.values() if t in d)
            idf = math.log((n - nt + 0.5) / (nt + 0.5) + 1.0)
            s += idf * f * (k1 + 1) / (f + k1 * (1 - b + b * len(toks) / avgdl))
        out[doc_id] = s
    return out


class TestBuild:
    def test_single_doc(self):
        idx = build_lexical_index(TOY[:1])
        assert idx.doc_count == 1
        assert idx.avg_doc_length == idx.doc_lengths["d1"]

    def test_absent_token_not_in_postings(self):
        idx = build_lexical_index(TOY)
        assert "porto" not in idx.postings

    def test_hand_built_postings(self):
        idx = build_lexical_index(TOY)
        assert sorted(idx.postings["rua"]) == [("d1", 1), ("d3", 1)]
        assert idx.postings["liberdade"] == [("d2", 1)]
        # "lisboa" appears once in every doc
        assert sorted(d for d, _ in idx.postings["lisboa"]) == ["d1", "d2", "d3"]

    def test_duplicate_id(self):
        with pytest.raises(DuplicateId):
            build_lexical_index(TOY + [TOY[0]])


class TestScore:
    def test_no_overlap_is_zero(self):
        idx = build_lexical_index(TOY)
        assert bm25_score(idx, ["porto", "braga"], "d1") == 0.0

    def test_single_doc_self_query(self):
        corpus = TOY[:1]
        idx = build_lexical_index(corpus)
        q = normalize_text(render_normalized(corpus[0]))
        # hand evaluation: N=1, every token has n(t)=1 -> idf=ln(1/1.5+1),
        # |d|=avgdl so the length norm collapses to k1
        idf = math.log(0.5 / 1.5 + 1.0)
        tf = {t: q.count(t) for t in set(q)}
        # the score sums over query tokens, repeats included
        expect = sum(idf * tf[t] * 2.5 / (tf[t] + 1.5) for t in q)
        assert bm25_score(idx, q, "d1") == pytest.approx(expect, abs=1e-12)

    def test_three_doc_oracle(self):
        idx = build_lexical_index(TOY)
        q = ["rua", "flores"]
        want = oracle_scores(TOY, q)
        for doc_id in want:
            assert bm25_score(idx, q, doc_id) == pytest.approx(want[doc_id], abs=1e-9)

    def test_unknown_doc(self):
        idx = build_lexical_index(TOY)
        with pytest.raises(UnknownDoc):
            bm25_score(idx, ["rua"], "nope")

    def test_scores_nonnegative(self):
        idx = build_lexical_index(TOY)
        for a in TOY:
            assert bm25_score(idx, ["rua", "lisboa", "flores"], a.id) >= 0.0


class TestTopK:
    def test_k_exceeds_corpus(self):
        idx = build_lexical_index(TOY)
        assert len(top_k_lexical(idx, "rua", 10)) == 3

    def test_exact_doc_query_wins(self):
        idx = build_lexical_index(TOY)
        ranked = top_k_lexical(idx, render_normalized(TOY[1]), 1)
        assert ranked[0][0] == "d2"

    def test_matches_exhaustive_ranking(self, small_corpus):
        corpus = small_corpus[:120]
        idx = build_lexical_index(corpus)
        rnd = random.Random(7)
        for _ in range(20):
            q = render_normalized(corpus[rnd.randrange(len(corpus))])
            got = top_k_lexical(idx, q, 10)
            toks = normalize_text(q)
            full = sorted(((bm25_score(idx, toks, a.id), a.id) for a in corpus),
                          key=lambda t: (-t[0], t[1]))
            assert [(d, pytest.approx(s, abs=1e-9)) for s, d in full[:10]] == \
                [(d, pytest.approx(s, abs=1e-9)) for d, s in got]

    def test_sorted_descending_tie_by_id(self):
        idx = build_lexical_index(TOY)
        got = top_k_lexical(idx, "lisboa rua", 3)
        scores = [s for _, s in got]
        assert scores == sorted(scores, reverse=True)
