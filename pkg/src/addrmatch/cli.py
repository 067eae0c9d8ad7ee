"""Operator command line. Every subcommand prints a JSON summary to stdout
and exits 0 on success, 1 on operation errors, 2 on usage errors."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import datagen, evalharness, pipeline
from .embedding import BiTrainerConfig, load_weights, save_weights, train_biencoder
from .model import UnnormalizedAddress, load_corpus
from .pipeline import Matcher, Mode, PipelineConfig
from .reranker import (RerankerConfig, build_feature_samples, load_reranker,
                       save_reranker, train_reranker)
from .store import load_store, precompute_store, save_store

BUNDLE_FILES = {
    "corpus": "corpus.jsonl",
    "bi": "biencoder.weights",
    "rr": "reranker.json",
    "store": "store.bin",
}


def _load_bundle(bundle_dir: str):
    d = Path(bundle_dir)
    corpus = load_corpus(d / BUNDLE_FILES["corpus"])
    bi = load_weights(d / BUNDLE_FILES["bi"])
    rr_path = d / BUNDLE_FILES["rr"]
    rr = load_reranker(rr_path) if rr_path.exists() else None
    store_path = d / BUNDLE_FILES["store"]
    if store_path.exists():
        index = load_store(store_path, corpus=corpus)
    else:
        index = precompute_store(corpus, bi)
    return corpus, bi, rr, index


def _emit(summary: dict) -> None:
    print(json.dumps(summary, ensure_ascii=False))


def _noise_from_args(args) -> datagen.NoiseConfig:
    return datagen.NoiseConfig(
        p_abbreviate=args.p_abbreviate, p_typo=args.p_typo,
        p_drop_token=args.p_drop_token, p_shuffle=args.p_shuffle,
        p_zip_degrade=args.p_zip_degrade, max_typos=args.max_typos,
        seed=args.noise_seed)


def _add_noise_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p-abbreviate", type=float, default=0.5)
    p.add_argument("--p-typo", type=float, default=0.3)
    p.add_argument("--p-drop-token", type=float, default=0.15)
    p.add_argument("--p-shuffle", type=float, default=0.2)
    p.add_argument("--p-zip-degrade", type=float, default=0.2)
    p.add_argument("--max-typos", type=int, default=2)
    p.add_argument("--noise-seed", type=int, default=0)


def cmd_generate_corpus(args) -> dict:
    cfg = datagen.CorpusConfig(n_addresses=args.n, seed=args.seed)
    corpus = datagen.generate_corpus(cfg)
    from .model import dump_corpus

    dump_corpus(corpus, args.out)
    summary = {"command": "generate-corpus", "n": len(corpus),
               "seed": args.seed, "out": args.out}
    if args.queries:
        import numpy as np

        rng = np.random.default_rng(args.seed + 1)
        noise = _noise_from_args(args)
        picks = rng.choice(len(corpus), size=args.queries, replace=True)
        queries = [datagen.derive_unnormalized(corpus[int(i)], noise)
                   for i in picks]
        datagen.dump_gold(queries, args.out_queries)
        summary["queries"] = args.queries
        summary["out_queries"] = args.out_queries
    return summary


def cmd_build_pairs(args) -> dict:
    corpus = load_corpus(args.corpus)
    by_id = {a.id: a for a in corpus}
    queries = datagen.load_gold(args.queries)
    gold = [(q, by_id[q.gold_id]) for q in queries if q.gold_id in by_id]
    if args.kind == "bi":
        pairs = datagen.build_biencoder_pairs(gold, corpus, seed=args.seed)
    else:
        bi = load_weights(args.bi_weights)
        index = load_store(args.store, corpus=corpus)
        pairs = datagen.build_crossencoder_pairs(gold, index, bi,
                                                 seed=args.seed, k=args.k)
    datagen.dump_pairs(pairs, args.out)
    n_pos = sum(1 for p in pairs if p.label == 1)
    return {"command": "build-pairs", "kind": args.kind, "pairs": len(pairs),
            "positives": n_pos, "negatives": len(pairs) - n_pos,
            "out": args.out}


def cmd_train_biencoder(args) -> dict:
    pairs = datagen.load_pairs(args.pairs)
    cfg = BiTrainerConfig(epochs=args.epochs, batch_size=args.batch_size,
                          learning_rate=args.lr, margin=args.margin,
                          feature_size=args.feature_size, seed=args.seed)
    w = train_biencoder(pairs, cfg)
    save_weights(w, args.out)
    return {"command": "train-biencoder", "pairs": len(pairs),
            "epochs": cfg.epochs, "first_loss": w.epoch_losses[0],
            "final_loss": w.epoch_losses[-1], "out": args.out}


def cmd_train_reranker(args) -> dict:
    pairs = datagen.load_pairs(args.pairs)
    corpus = load_corpus(args.corpus)
    bi = load_weights(args.bi_weights)
    samples = build_feature_samples(pairs, corpus, bi)
    w = train_reranker(samples, RerankerConfig(epochs=args.epochs,
                                               learning_rate=args.lr,
                                               seed=args.seed))
    save_reranker(w, args.out)
    return {"command": "train-reranker", "samples": len(samples),
            "out": args.out}


def cmd_embed_db(args) -> dict:
    corpus = load_corpus(args.corpus)
    bi = load_weights(args.bi_weights)
    index = precompute_store(corpus, bi)
    save_store(index, args.out)
    return {"command": "embed-db", "entries": index.size,
            "shard_sizes": {str(k): v for k, v in index.shard_sizes().items()},
            "fingerprint": index.fingerprint, "out": args.out}


def cmd_match(args) -> dict:
    corpus, bi, rr, index = _load_bundle(args.index)
    mode = Mode(args.mode)
    cfg = PipelineConfig(mode=mode, top_k=args.top_k,
                         cutoff_bice=args.cutoff_bice,
                         cutoff_bi_only=args.cutoff_bi_only)
    matcher = Matcher(index, bi, rr if mode is Mode.BI_CE else rr, cfg)
    include_timings = not args.no_timings
    if args.raw:
        decision = matcher.match(UnnormalizedAddress(args.raw))
        return pipeline.decision_to_dict(decision, include_timings)
    queries = datagen.load_gold(args.queries)
    results = matcher.match_batch(queries)
    decisions = [d for d in results if isinstance(d, pipeline.MatchDecision)]
    pipeline.dump_decisions(decisions, args.out, include_timings)
    return {"command": "match", "queries": len(queries),
            "decisions": len(decisions),
            "failures": len(results) - len(decisions), "out": args.out}


def cmd_evaluate(args) -> dict:
    decisions = pipeline.load_decisions(args.decisions)
    corpus = load_corpus(args.corpus)
    addresses = {a.id: a for a in corpus}
    queries = datagen.load_gold(args.gold)
    gold = {q.raw: q.gold_id for q in queries if q.gold_id}
    report = evalharness.evaluate(decisions, gold, addresses, args.cutoff)
    out = report.to_dict()
    out["command"] = "evaluate"
    return out


def cmd_bench(args) -> dict:
    corpus, bi, rr, index = _load_bundle(args.index)
    cfg = PipelineConfig(mode=Mode(args.mode))
    matcher = Matcher(index, bi, rr, cfg)
    queries = datagen.load_gold(args.queries)[:args.n_queries]
    reports = []
    for with_filter in (True, False):
        rep = evalharness.bench_throughput(matcher, queries, with_filter,
                                           repetitions=args.repetitions)
        reports.append(rep.to_dict())
    return {"command": "bench", "reports": reports}


def cmd_serve(args) -> dict:
    import uvicorn

    from .pipeline import PipelineConfig
    from .service import AppState, ReviewStore, create_app

    corpus, bi, rr, index = _load_bundle(args.index)
    cfg = PipelineConfig(cutoff_bice=args.cutoff_bice,
                         cutoff_bi_only=args.cutoff_bi_only)
    matcher = Matcher(index, bi, rr, cfg)
    state = AppState(bi=bi, rr=rr, cfg=cfg,
                     review=ReviewStore(args.review_log),
                     feedback_path=args.feedback, matcher=matcher)
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port)
    return {"command": "serve"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="addrmatch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-corpus", help="synthesize a normalized corpus"
                       " and optional noisy gold queries")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--queries", type=int, default=0)
    p.add_argument("--out-queries", default="queries.jsonl")
    _add_noise_args(p)
    p.set_defaults(func=cmd_generate_corpus)

    p = sub.add_parser("build-pairs", help="construct training pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--kind", choices=["bi", "ce"], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--bi-weights")
    p.add_argument("--store")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_build_pairs)

    p = sub.add_parser("train-biencoder", help="train the embedding head")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--feature-size", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_biencoder)

    p = sub.add_parser("train-reranker", help="train the pair scorer")
    p.add_argument("--pairs", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--bi-weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=5000)
    p.add_argument("--lr", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_reranker)

    p = sub.add_parser("embed-db", help="pre-embed the corpus into shards")
    p.add_argument("--corpus", required=True)
    p.add_argument("--bi-weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed_db)

    p = sub.add_parser("match", help="match one raw address or a query file")
    p.add_argument("--index", required=True,
                   help="bundle directory with corpus/weights/store")
    p.add_argument("--raw")
    p.add_argument("--queries")
    p.add_argument("--out", default="decisions.jsonl")
    p.add_argument("--mode", choices=["bi", "bice"], default="bice")
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--cutoff-bice", type=float, default=0.90)
    p.add_argument("--cutoff-bi-only", type=float, default=0.99)
    p.add_argument("--no-timings", action="store_true")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("evaluate", help="score decisions against gold labels")
    p.add_argument("--decisions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--cutoff", type=float, default=0.90)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="throughput with and without CP4 filter")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--n-queries", type=int, default=50)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--mode", choices=["bi", "bice"], default="bi")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP matching service")
    p.add_argument("--index", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--review-log", default="review.log.jsonl")
    p.add_argument("--feedback", default="feedback_pairs.jsonl")
    p.add_argument("--cutoff-bice", type=float, default=0.90)
    p.add_argument("--cutoff-bi-only", type=float, default=0.99)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "match" and not args.raw and not args.queries:
        parser.error("match needs --raw or --queries")
    try:
        t0 = time.perf_counter()
        summary = args.func(args)
        if "elapsed_s" not in summary and not getattr(args, "no_timings", False):
            summary["elapsed_s"] = round(time.perf_counter() - t0, 3)
        _emit(summary)
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
