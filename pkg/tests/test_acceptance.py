"""Acceptance gate: one test per release criterion, each printing a PASS/FAIL
line (visible with ``pytest tests/test_acceptance.py -s``) and enforcing its
runtime budget. All criteria run against the built-in embedder and reranker
only — no external model service involved."""
import collections
import json
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from addrmatch import datagen, lexical
from addrmatch._kernels import distance_matrix
from addrmatch.embedding import (DIM, BiTrainerConfig, contrastive_grad,
                                 contrastive_loss, cosine, embed, init_weights,
                                 train_biencoder)
from addrmatch.evalharness import bench_throughput, evaluate, multi_seed_stability
from addrmatch.metrics import (similarity_ratio, token_set_ratio,
                               token_sort_ratio)
from addrmatch.model import (UnnormalizedAddress, artery_key, door_key,
                             render_normalized)
from addrmatch.pipeline import Matcher, Mode, PipelineConfig
from addrmatch.reranker import build_feature_samples, train_reranker
from addrmatch.store import ShardedIndex, _Shard, precompute_store, top_k


def _report(name: str, ok: bool, elapsed: float, budget: float,
            detail: str = "") -> None:
    status = "PASS" if ok and elapsed < budget else "FAIL"
    extra = f" | {detail}" if detail else ""
    print(f"[{status}] {name}: {elapsed:.1f}s (budget {budget:.0f}s){extra}",
          flush=True)
    assert ok, f"{name} failed{extra}"
    assert elapsed < budget, f"{name} exceeded budget: {elapsed:.1f}s"


class TestAcceptance:
    def test_01_loss_exactness(self):
        t0 = time.perf_counter()
        a = np.array([1.0, 0.0])
        half = np.array([0.5, math.sqrt(3.0) / 2.0])  # cosine(a, half) = 0.5
        checks = [
            abs(contrastive_loss(a, a.copy(), 1)) < 1e-12,          # D=0, y=1
            abs(contrastive_loss(a, half, 0)) < 1e-12,              # D=margin, y=0
            abs(contrastive_loss(a, -a, 0)) < 1e-12,                # D=2>margin
            abs(contrastive_loss(a, half, 1) - 0.125) < 1e-12,      # D=0.5, y=1
        ]
        _report("loss exactness", all(checks), time.perf_counter() - t0, 1.0)

    def test_02_gradient_fidelity(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(12)
        h = 1e-5
        max_rel = 0.0
        for trial in range(100):
            y = trial % 2
            xa = rng.normal(size=32)
            # half the negatives land inside the hinge (correlated vectors)
            xb = (xa + 0.1 * rng.normal(size=32) if trial % 4 < 2
                  else rng.normal(size=32))
            ga, gb = contrastive_grad(xa, xb, y)
            fd_a = np.zeros(32)
            fd_b = np.zeros(32)
            for i in range(32):
                for vec, fd in ((xa, fd_a), (xb, fd_b)):
                    orig = vec[i]
                    vec[i] = orig + h
                    lp = contrastive_loss(xa, xb, y)
                    vec[i] = orig - h
                    lm = contrastive_loss(xa, xb, y)
                    vec[i] = orig
                    fd[i] = (lp - lm) / (2 * h)
            num = np.linalg.norm(np.concatenate([ga - fd_a, gb - fd_b]))
            den = max(np.linalg.norm(np.concatenate([ga, gb])), 1e-8)
            max_rel = max(max_rel, num / den)
        _report("gradient fidelity", max_rel < 1e-4,
                time.perf_counter() - t0, 10.0, f"max rel err {max_rel:.2e}")

    def test_03_retrieval_exactness(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        n = 1000
        vectors = rng.normal(size=(n, DIM)).astype(np.float32)
        ids = [f"S{i:06d}" for i in range(n)]
        shards = {}
        for d in range(1, 10):
            rows = [i for i in range(n) if i % 9 + 1 == d]
            shards[d] = _Shard.build([ids[i] for i in rows], vectors[rows])
        index = ShardedIndex(shards, {}, 0)

        vec64 = vectors.astype(np.float64)
        norms = np.linalg.norm(vec64, axis=1)
        mismatches = 0
        for _ in range(100):
            q = rng.normal(size=DIM)
            sims = vec64 @ q / (norms * np.linalg.norm(q))
            oracle = sorted(range(n), key=lambda i: (-sims[i], ids[i]))
            for k in (1, 10):
                got = top_k(index, q, shard=None, k=k)
                want = oracle[:k]
                if [c.id for c in got] != [ids[i] for i in want]:
                    mismatches += 1
                elif any(abs(c.similarity - sims[i]) > 1e-9
                         for c, i in zip(got, want)):
                    mismatches += 1
        _report("retrieval exactness", mismatches == 0,
                time.perf_counter() - t0, 30.0, f"{mismatches} mismatches")

    def test_04_bm25_exactness(self):
        t0 = time.perf_counter()
        from addrmatch.model import NormalizedAddress, ZipCode, normalize_text

        corpus = [
            NormalizedAddress("d1", "Rua", "das Flores", "12", None,
                              ZipCode(1000, 1, "Lisboa")),
            NormalizedAddress("d2", "Avenida", "da Liberdade", "7", None,
                              ZipCode(1250, 1, "Lisboa")),
            NormalizedAddress("d3", "Rua", "do Carmo", "3", None,
                              ZipCode(1200, 1, "Porto")),
        ]
        docs = {a.id: normalize_text(render_normalized(a)) for a in corpus}
        avgdl = sum(len(d) for d in docs.values()) / 3
        idx = lexical.build_lexical_index(corpus)
        query = ["rua", "flores", "lisboa"]
        ok = True
        for doc_id, toks in docs.items():
            want = 0.0
            for t in query:
                f = toks.count(t)
                if f == 0:
                    continue
                nt = sum(1 for d in docs.values() if t in d)
                idf = math.log((3 - nt + 0.5) / (nt + 0.5) + 1.0)
                want += idf * f * 2.5 / (f + 1.5 * (0.25 + 0.75 * len(toks) / avgdl))
            got = lexical.bm25_score(idx, query, doc_id)
            ok = ok and abs(got - want) < 1e-9
        _report("bm25 exactness", ok, time.perf_counter() - t0, 1.0)

    def test_05_string_metric_oracles(self):
        t0 = time.perf_counter()
        alphabet = "abc"
        max_len = 8

        # enumerate all strings of length <= 8 in prefix-tree order: the
        # string at level-local index i has parent i // 3 and appends
        # alphabet[i % 3]
        levels = [[""]]
        for _ in range(max_len):
            levels.append([s + c for s in levels[-1] for c in alphabet])
        all_strings = [s for level in levels for s in level]
        offsets = np.cumsum([0] + [len(l) for l in levels])
        total = len(all_strings)
        assert total == 9841

        def oracle_matrix(sub_cost: int) -> np.ndarray:
            # block DP over the prefix tree: d(a+x, b+y) from the three
            # parent blocks, vectorized over every string pair of a level pair
            blocks = {}
            for la in range(max_len + 1):
                for lb in range(max_len + 1):
                    if la == 0:
                        blocks[(la, lb)] = np.full((1, 3 ** lb), lb, np.int8)
                    elif lb == 0:
                        blocks[(la, lb)] = np.full((3 ** la, 1), la, np.int8)
                    else:
                        up = np.repeat(blocks[(la - 1, lb)], 3, axis=0)
                        left = np.repeat(blocks[(la, lb - 1)], 3, axis=1)
                        diag = np.repeat(np.repeat(blocks[(la - 1, lb - 1)],
                                                   3, 0), 3, 1)
                        ca = np.arange(3 ** la, dtype=np.int64) % 3
                        cb = np.arange(3 ** lb, dtype=np.int64) % 3
                        cost = ((ca[:, None] != cb[None, :])
                                .astype(np.int8) * sub_cost)
                        blocks[(la, lb)] = np.minimum(
                            np.minimum(up + 1, left + 1), diag + cost)
            full = np.empty((total, total), np.int8)
            for la in range(max_len + 1):
                for lb in range(max_len + 1):
                    full[offsets[la]:offsets[la + 1],
                         offsets[lb]:offsets[lb + 1]] = blocks[(la, lb)]
            return full

        ok = True
        chunk = 512
        oracle2 = None
        for sub_cost in (1, 2):
            oracle = oracle_matrix(sub_cost)
            for start in range(0, total, chunk):
                got = distance_matrix(all_strings[start:start + chunk],
                                      all_strings, sub_cost)
                if not np.array_equal(got, oracle[start:start + chunk]):
                    ok = False
                    break
            if sub_cost == 2:
                oracle2 = oracle
            if not ok:
                break

        # similarity/token metrics against the sub-cost-2 oracle on a wide
        # random sample (the scalar functions reduce to the oracle formula
        # on single-token strings)
        lens = np.array([len(s) for s in all_strings])
        rng = np.random.default_rng(3)
        for _ in range(5000 if ok else 0):
            i, j = int(rng.integers(total)), int(rng.integers(total))
            a, b = all_strings[i], all_strings[j]
            lensum = lens[i] + lens[j]
            want = (100 if lensum == 0 else
                    int(100.0 * (lensum - int(oracle2[i, j])) / lensum + 0.5))
            if similarity_ratio(a, b) != want:
                ok = False
                break
            if token_sort_ratio(a, b) != similarity_ratio(a, b):
                ok = False
                break
            want_set = (100 if a == b else max(
                similarity_ratio("", a), similarity_ratio("", b),
                similarity_ratio(a, b)))
            # empty strings tokenize to nothing: both sides equal
            if not a or not b:
                want_set = token_set_ratio(a, b)
            if token_set_ratio(a, b) != want_set:
                ok = False
                break

        # permutation invariance of token_sort_ratio on 500 random pairs
        words = ["rua", "avenida", "flores", "12", "lisboa", "carmo", "1000"]
        for _ in range(500):
            toks = [words[int(k)] for k in
                    rng.integers(0, len(words), int(rng.integers(1, 7)))]
            perm = [toks[int(k)] for k in rng.permutation(len(toks))]
            if token_sort_ratio(" ".join(toks), " ".join(perm)) != 100:
                ok = False
                break
        _report("string-metric oracle equivalence", ok,
                time.perf_counter() - t0, 60.0)

    def test_06_end_to_end_pipeline(self):
        t0 = time.perf_counter()
        corpus = datagen.generate_corpus(datagen.CorpusConfig(5000, seed=101))
        noise = datagen.NoiseConfig(seed=202)
        rng = np.random.default_rng(99)
        order = rng.permutation(len(corpus))
        eval_addrs = [corpus[int(i)] for i in order[:2000]]
        train_addrs = [corpus[int(i)] for i in order[2000:4000]]
        queries = [datagen.derive_unnormalized(a, noise) for a in eval_addrs]
        train_gold = [(datagen.derive_unnormalized(a, noise), a)
                      for a in train_addrs]
        # split by gold id: no training pair may leak into evaluation
        assert not ({a.id for a in eval_addrs} & {a.id for a in train_addrs})

        bi_pairs = datagen.build_biencoder_pairs(train_gold, corpus, seed=303)
        labels = collections.Counter(p.label for p in bi_pairs)
        ratio_ok = labels[0] == labels[1] == len(train_gold)
        cats = collections.Counter(p.neg_category for p in bi_pairs
                                   if p.label == 0)
        target = labels[0] / 3.0
        mix_ok = all(abs(cats[c] - target) <= 0.05 * target
                     for c in ("Easy", "Hard", "VeryHard"))

        bi = train_biencoder(bi_pairs, BiTrainerConfig(epochs=6, seed=404))
        index = precompute_store(corpus, bi)
        ce_pairs = datagen.build_crossencoder_pairs(train_gold, index, bi,
                                                    seed=505)
        ce_labels = collections.Counter(p.label for p in ce_pairs)
        ce_ratio = ce_labels[0] / ce_labels[1]
        ce_ok = 8.5 <= ce_ratio <= 9.0

        samples = build_feature_samples(ce_pairs, corpus, bi)
        rr = train_reranker(samples)
        matcher = Matcher(index, bi, rr, PipelineConfig())
        decisions = matcher.match_batch(queries)
        from addrmatch.pipeline import MatchDecision

        decisions = [d for d in decisions if isinstance(d, MatchDecision)]
        gold = {q.raw: q.gold_id for q in queries}
        addresses = {a.id: a for a in corpus}
        rep = evaluate(decisions, gold, addresses, cutoff=0.90,
                       recall_ks=(1, 10))

        # raw BM25 top-1 baseline on the same queries
        lex = lexical.build_lexical_index(corpus)
        bm25_hits = 0
        for q in queries:
            ranked = lexical.top_k_lexical(lex, q.raw, 1)
            if ranked and door_key(addresses[ranked[0][0]]) == \
                    door_key(addresses[q.gold_id]):
                bm25_hits += 1
        bm25_top1 = 100.0 * bm25_hits / len(queries)

        checks = {
            "pairs 1:1": ratio_ok,
            "category mix ±5%": mix_ok,
            "ce ratio in [8.5, 9]": ce_ok,
            "recall@10 >= recall@1": rep.recall_at[10] >= rep.recall_at[1],
            "recall@10 >= 90%": rep.recall_at[10] >= 90.0,
            "filtered >= unfiltered door acc":
                rep.door_acc_filtered is not None
                and rep.door_acc_filtered >= rep.door_acc_nofilter,
            "reranked >= bm25 top-1": rep.door_acc_nofilter >= bm25_top1,
        }
        failed = "; ".join(k for k, v in checks.items() if not v)
        detail = (f"recall@10 {rep.recall_at[10]:.1f}%, door "
                  f"{rep.door_acc_nofilter:.1f}% (filtered "
                  f"{rep.door_acc_filtered:.1f}%), bm25 {bm25_top1:.1f}%"
                  + (f"; FAILED: {failed}" if failed else ""))
        _report("end-to-end pipeline", all(checks.values()),
                time.perf_counter() - t0, 600.0, detail)

    def test_07_sharding_speedup(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(17)
        n = 100_000
        bi = init_weights(seed=0)
        vectors = rng.normal(size=(n, DIM)).astype(np.float32)
        shards = {}
        per = n // 9
        for d in range(1, 10):
            rows = slice((d - 1) * per, d * per if d < 9 else n)
            ids = [f"S{i:06d}" for i in range(rows.start, rows.stop)]
            shards[d] = _Shard.build(ids, vectors[rows])
        index = ShardedIndex(shards, {}, 0)
        matcher = Matcher(index, bi, None,
                          PipelineConfig(mode=Mode.BI_ONLY))

        words = ["rua", "avenida", "travessa", "flores", "carmo", "liberdade"]
        queries = []
        for i in range(30):
            cp4 = int(rng.integers(1000, 10000))
            w = " ".join(str(rng.choice(words)) for _ in range(3))
            queries.append(UnnormalizedAddress(f"{w} {i + 1} {cp4:04d}-001"))

        fast = bench_throughput(matcher, queries, with_cp4_filter=True)
        slow = bench_throughput(matcher, queries, with_cp4_filter=False)
        speedup = fast.iterations_per_second / slow.iterations_per_second
        _report("sharding speedup", speedup >= 3.0,
                time.perf_counter() - t0, 300.0, f"speedup {speedup:.1f}x")

    def test_08_stability(self):
        t0 = time.perf_counter()
        corpus = datagen.generate_corpus(datagen.CorpusConfig(1000, seed=7))
        noise = datagen.NoiseConfig(seed=8)
        rng = np.random.default_rng(5)
        order = rng.permutation(len(corpus))
        eval_addrs = [corpus[int(i)] for i in order[:300]]
        train_addrs = [corpus[int(i)] for i in order[300:800]]
        queries = [datagen.derive_unnormalized(a, noise) for a in eval_addrs]
        train_gold = [(datagen.derive_unnormalized(a, noise), a)
                      for a in train_addrs]
        gold = {q.raw: q.gold_id for q in queries}
        addresses = {a.id: a for a in corpus}

        def procedure(seed: int):
            pairs = datagen.build_biencoder_pairs(train_gold, corpus, seed=seed)
            bi = train_biencoder(pairs, BiTrainerConfig(epochs=4, seed=seed))
            index = precompute_store(corpus, bi)
            ce = datagen.build_crossencoder_pairs(train_gold, index, bi,
                                                  seed=seed)
            rr = train_reranker(build_feature_samples(ce, corpus, bi))
            matcher = Matcher(index, bi, rr, PipelineConfig())
            a_ok = d_ok = 0
            for q in queries:
                d = matcher.match(q)
                g = addresses[q.gold_id]
                p = addresses[d.best.id]
                a_ok += artery_key(p) == artery_key(g)
                d_ok += door_key(p) == door_key(g)
            return (100.0 * a_ok / len(queries), 100.0 * d_ok / len(queries))

        seeds = [11, 22, 33, 44, 55]
        summary = multi_seed_stability(procedure, seeds)
        ok = (summary.std_door <= 2.0
              and summary.selected_run in range(len(seeds))
              and summary.door_accs[summary.selected_run] > 0.0)
        _report("multi-seed stability", ok, time.perf_counter() - t0, 1800.0,
                f"door accs {[round(a, 1) for a in summary.door_accs]}, "
                f"std {summary.std_door:.2f}pp")

    def test_09_service_contract(self, trained_setup, tmp_path):
        t0 = time.perf_counter()
        from fastapi.testclient import TestClient

        from addrmatch.service import (AlreadyResolved, AppState, ReviewStatus,
                                       ReviewStore, UnknownItem, create_app)

        ok = True
        # exhaustive review state machine
        store = ReviewStore(tmp_path / "log.jsonl")
        a = store.enqueue({"query": "q1"})
        b = store.enqueue({"query": "q2"})
        ok &= store.resolve(a.item_id, "X", False).status is ReviewStatus.RESOLVED
        ok &= store.resolve(b.item_id, None, True).status is \
            ReviewStatus.UNDELIVERABLE
        for item_id in (a.item_id, b.item_id):   # no transition out of terminal
            try:
                store.resolve(item_id, "Y", False)
                ok = False
            except AlreadyResolved:
                pass
        try:
            store.resolve("missing", None, True)
            ok = False
        except UnknownItem:
            pass

        # crash-replay durability: rebuild purely from the log
        reborn = ReviewStore(tmp_path / "log.jsonl")
        ok &= reborn.get(a.item_id).status is ReviewStatus.RESOLVED
        ok &= reborn.get(a.item_id).resolution == "X"
        ok &= reborn.get(b.item_id).status is ReviewStatus.UNDELIVERABLE

        # concurrent /match equals sequential /match on 200 queries
        state = AppState(bi=trained_setup["bi"], rr=trained_setup["rr"],
                         cfg=PipelineConfig(),
                         review=ReviewStore(tmp_path / "svc.jsonl"),
                         feedback_path=str(tmp_path / "fb.jsonl"),
                         matcher=trained_setup["matcher"])
        client = TestClient(create_app(state))
        raws = [render_normalized(a) for a in trained_setup["corpus"][:100]]
        raws += [q.raw for q in trained_setup["queries"][:100]]

        def call(raw):
            body = client.post("/match", json={"raw": raw}).json()
            return (body["best_id"], body["confidence"], body["outcome"])

        sequential = {raw: call(raw) for raw in raws}
        with ThreadPoolExecutor(max_workers=8) as pool:
            concurrent = list(pool.map(call, raws))
        ok &= all(concurrent[i] == sequential[raw]
                  for i, raw in enumerate(raws))
        _report("service contract", bool(ok), time.perf_counter() - t0, 120.0)
